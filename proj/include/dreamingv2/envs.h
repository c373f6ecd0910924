#pragma once

#include "augment.h"
#include "common.h"

#include <memory>
#include <string>

namespace dreamingv2
{

struct EnvStep
{
	torch::Tensor observation; // [64, 64, 3] float32 in [0,1], 1/255 quantized
	double reward = 0.0;
	bool done = false;
	std::string phase; // subtask phase label; empty when the env has none
};

// Seed-deterministic pixel environment: the full trajectory is a pure
// function of (seed, action sequence). Episodes last 100 steps; actions are
// clamped to [-1,1] per component; two sim substeps per action.
class ToyEnv
{
public:
	virtual ~ToyEnv() = default;

	virtual EnvStep reset(uint64_t seed) = 0;
	virtual EnvStep step(const torch::Tensor& action) = 0;
	virtual torch::Tensor render() const = 0;
	virtual int64_t action_dim() const = 0;
	virtual std::string name() const = 0;

	int64_t episode_length() const { return 100; }
	// Documented per-step reward ceiling (bounds tests and reward scaling).
	virtual double max_step_reward() const = 0;
};

// Double integrator on [0,1]^2 with wall collisions that zero the velocity
// (the contact discontinuity). Reward 1 while within 0.05 of the seeded
// goal. Actions: force x/y.
class PointReachEnv : public ToyEnv
{
public:
	EnvStep reset(uint64_t seed) override;
	EnvStep step(const torch::Tensor& action) override;
	torch::Tensor render() const override;
	int64_t action_dim() const override { return 2; }
	std::string name() const override { return "point_reach"; }
	double max_step_reward() const override { return 1.0; }

	std::pair<double, double> position() const { return {px_, py_}; }
	std::pair<double, double> velocity() const { return {vx_, vy_}; }
	std::pair<double, double> goal() const { return {gx_, gy_}; }

	static constexpr double kGoalRadius = 0.05;

private:
	double px_ = 0.5, py_ = 0.5, vx_ = 0.0, vy_ = 0.0;
	double gx_ = 0.5, gy_ = 0.5;
	int64_t steps_ = 0;
	bool active_ = false;
};

enum class LiftPhase
{
	approach,
	grasp,
	lift
};

std::string to_string(LiftPhase phase);

// Gripper-and-block task with a discrete grasp event: the grip engages only
// when the gripper tip is within 0.03 of the block center while the grip
// action exceeds 0.5, after which the block rides with the gripper. Phases
// latch monotonically approach -> grasp -> lift. Actions: move, lift, grip.
class PhaseLiftEnv : public ToyEnv
{
public:
	EnvStep reset(uint64_t seed) override;
	EnvStep step(const torch::Tensor& action) override;
	torch::Tensor render() const override;
	int64_t action_dim() const override { return 3; }
	std::string name() const override { return "phase_lift"; }
	double max_step_reward() const override { return 1.1; }

	double gripper_x() const { return gx_; }
	double gripper_height() const { return gh_; }
	bool gripped() const { return grip_; }
	double block_x() const { return bx_; }
	double block_height() const { return bh_; }
	LiftPhase phase() const { return phase_; }

	// Binary mask [64,64] of the block sprite pixels for the current state;
	// used by the reconstruction analysis to measure per-sprite error.
	torch::Tensor block_mask() const;

	// render() is a pure function of state; this lets tests probe it directly.
	void set_state_for_testing(double gx, double gh, bool grip, double bx, double bh)
	{
		gx_ = gx;
		gh_ = gh;
		grip_ = grip;
		bx_ = bx;
		bh_ = bh;
	}

	static constexpr double kGripRadius = 0.03;
	static constexpr double kLiftThreshold = 0.2;
	static constexpr double kBlockHalf = 0.04;

private:
	double gx_ = 0.5, gh_ = 0.5, bx_ = 0.5, bh_ = 0.0;
	bool grip_ = false;
	LiftPhase phase_ = LiftPhase::approach;
	int64_t steps_ = 0;
	bool active_ = false;
};

// Registry by the documented names "point_reach" and "phase_lift".
std::unique_ptr<ToyEnv> make_env(const std::string& name);

} // namespace dreamingv2
