#include "dreamingv2/envs.h"

#include <array>
#include <cmath>
#include <random>

namespace dreamingv2
{

namespace
{

constexpr int kN = kImageSize;
constexpr int kSubsteps = 2;

struct Canvas
{
	std::array<double, kN * kN * 3> pixels{};

	void fill(double r, double g, double b)
	{
		for (int i = 0; i < kN * kN; ++i)
		{
			pixels[i * 3 + 0] = r;
			pixels[i * 3 + 1] = g;
			pixels[i * 3 + 2] = b;
		}
	}

	void blend(int row, int col, double alpha, double r, double g, double b)
	{
		if (row < 0 || row >= kN || col < 0 || col >= kN || alpha <= 0.0)
		{
			return;
		}
		double* p = &pixels[(row * kN + col) * 3];
		p[0] += alpha * (r - p[0]);
		p[1] += alpha * (g - p[1]);
		p[2] += alpha * (b - p[2]);
	}

	// Anti-aliased disc; coverage ramps over one pixel at the rim.
	void draw_circle(double cx, double cy, double radius, double r, double g, double b)
	{
		int row0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
		int row1 = std::min(kN - 1, static_cast<int>(std::ceil(cy + radius + 1)));
		int col0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
		int col1 = std::min(kN - 1, static_cast<int>(std::ceil(cx + radius + 1)));
		for (int row = row0; row <= row1; ++row)
		{
			for (int col = col0; col <= col1; ++col)
			{
				double dist = std::hypot(col - cx, row - cy);
				double alpha = std::clamp(radius - dist + 0.5, 0.0, 1.0);
				blend(row, col, alpha, r, g, b);
			}
		}
	}

	// Anti-aliased axis-aligned rectangle over continuous pixel coords.
	void draw_rect(double x0, double y0, double x1, double y1, double r, double g, double b)
	{
		int row0 = std::max(0, static_cast<int>(std::floor(y0)));
		int row1 = std::min(kN - 1, static_cast<int>(std::ceil(y1)));
		int col0 = std::max(0, static_cast<int>(std::floor(x0)));
		int col1 = std::min(kN - 1, static_cast<int>(std::ceil(x1)));
		for (int row = row0; row <= row1; ++row)
		{
			double cover_y = std::clamp(std::min<double>(y1, row + 1.0) - std::max<double>(y0, row), 0.0, 1.0);
			for (int col = col0; col <= col1; ++col)
			{
				double cover_x = std::clamp(std::min<double>(x1, col + 1.0) - std::max<double>(x0, col), 0.0, 1.0);
				blend(row, col, cover_x * cover_y, r, g, b);
			}
		}
	}

	torch::Tensor to_observation() const
	{
		auto out = torch::empty({kN, kN, 3}, torch::kFloat32);
		auto* dst = out.data_ptr<float>();
		for (size_t i = 0; i < pixels.size(); ++i)
		{
			dst[i] = static_cast<float>(std::round(std::clamp(pixels[i], 0.0, 1.0) * 255.0) / 255.0);
		}
		return out;
	}
};

double clamp_action(const torch::Tensor& action, int64_t index)
{
	return std::clamp(action[index].item<double>(), -1.0, 1.0);
}

// World x in [0,1] -> continuous pixel column; same scale for heights.
double to_px(double x)
{
	return x * (kN - 1);
}

// Heights grow upward; rows grow downward from a ground line near the
// bottom of the frame.
double height_to_row(double h)
{
	return to_px(0.92 - h);
}

} // namespace

EnvStep PointReachEnv::reset(uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> uniform(0.15, 0.85);
	px_ = uniform(rng);
	py_ = uniform(rng);
	do
	{
		gx_ = uniform(rng);
		gy_ = uniform(rng);
	} while (std::hypot(gx_ - px_, gy_ - py_) < 0.3);
	vx_ = vy_ = 0.0;
	steps_ = 0;
	active_ = true;
	return {render(), 0.0, false, ""};
}

EnvStep PointReachEnv::step(const torch::Tensor& action)
{
	if (!active_)
	{
		throw std::logic_error("PointReachEnv: step() before reset() or after done");
	}
	double ax = clamp_action(action, 0);
	double ay = clamp_action(action, 1);
	for (int s = 0; s < kSubsteps; ++s)
	{
		vx_ = std::clamp(vx_ + 0.02 * ax, -0.08, 0.08);
		vy_ = std::clamp(vy_ + 0.02 * ay, -0.08, 0.08);
		px_ += vx_;
		py_ += vy_;
		// Wall contact: clamp position and kill the normal velocity.
		if (px_ < 0.05 || px_ > 0.95)
		{
			px_ = std::clamp(px_, 0.05, 0.95);
			vx_ = 0.0;
		}
		if (py_ < 0.05 || py_ > 0.95)
		{
			py_ = std::clamp(py_, 0.05, 0.95);
			vy_ = 0.0;
		}
	}
	++steps_;
	double reward = std::hypot(px_ - gx_, py_ - gy_) <= kGoalRadius ? 1.0 : 0.0;
	bool done = steps_ >= episode_length();
	if (done)
	{
		active_ = false;
	}
	return {render(), reward, done, ""};
}

torch::Tensor PointReachEnv::render() const
{
	Canvas canvas;
	canvas.fill(0.10, 0.11, 0.13);
	canvas.draw_circle(to_px(gx_), to_px(gy_), 2.8, 0.15, 0.90, 0.30);
	canvas.draw_circle(to_px(px_), to_px(py_), 5.0, 0.92, 0.93, 1.00);
	return canvas.to_observation();
}

std::string to_string(LiftPhase phase)
{
	switch (phase)
	{
		case LiftPhase::approach: return "approach";
		case LiftPhase::grasp: return "grasp";
		case LiftPhase::lift: return "lift";
	}
	return "approach";
}

EnvStep PhaseLiftEnv::reset(uint64_t seed)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> block(0.25, 0.75);
	std::uniform_real_distribution<double> gripper(0.15, 0.85);
	std::uniform_real_distribution<double> height(0.35, 0.6);
	bx_ = block(rng);
	do
	{
		gx_ = gripper(rng);
	} while (std::abs(gx_ - bx_) < 0.15);
	gh_ = height(rng);
	bh_ = kBlockHalf;
	grip_ = false;
	phase_ = LiftPhase::approach;
	steps_ = 0;
	active_ = true;
	return {render(), 0.0, false, to_string(phase_)};
}

EnvStep PhaseLiftEnv::step(const torch::Tensor& action)
{
	if (!active_)
	{
		throw std::logic_error("PhaseLiftEnv: step() before reset() or after done");
	}
	double move = clamp_action(action, 0);
	double lift = clamp_action(action, 1);
	double grip_cmd = clamp_action(action, 2);
	for (int s = 0; s < kSubsteps; ++s)
	{
		gx_ = std::clamp(gx_ + 0.02 * move, 0.05, 0.95);
		gh_ = std::clamp(gh_ + 0.02 * lift, 0.0, 0.7);
		if (!grip_ && grip_cmd > 0.5 && std::hypot(gx_ - bx_, gh_ - bh_) < kGripRadius)
		{
			grip_ = true;
		}
		if (grip_)
		{
			bx_ = gx_;
			bh_ = gh_;
		}
	}
	if (grip_)
	{
		auto now = bh_ >= kLiftThreshold ? LiftPhase::lift : LiftPhase::grasp;
		phase_ = std::max(phase_, now);
	}
	++steps_;
	double dist = std::hypot(gx_ - bx_, gh_ - bh_);
	double reward = 0.1 * std::max(0.0, 1.0 - dist);
	if (grip_ && bh_ >= kLiftThreshold)
	{
		reward += 1.0;
	}
	bool done = steps_ >= episode_length();
	if (done)
	{
		active_ = false;
	}
	return {render(), reward, done, to_string(phase_)};
}

torch::Tensor PhaseLiftEnv::render() const
{
	Canvas canvas;
	canvas.fill(0.09, 0.10, 0.12);
	// Ground strip.
	canvas.draw_rect(0, height_to_row(0.0), kN, kN, 0.25, 0.25, 0.27);

	// Block sprite.
	double half = to_px(kBlockHalf);
	double bcx = to_px(bx_);
	double bcy = height_to_row(bh_);
	canvas.draw_rect(bcx - half, bcy - half, bcx + half, bcy + half, 0.95, 0.55, 0.10);

	// Gripper: stem from the top plus two prongs; prongs close when gripping.
	double gcx = to_px(gx_);
	double tip = height_to_row(gh_);
	canvas.draw_rect(gcx - 0.8, 0, gcx + 0.8, tip - 2.0, 0.75, 0.78, 0.82);
	double gap = grip_ ? 1.6 : 3.4;
	double prong_r = grip_ ? 0.95 : 0.75;
	double prong_g = grip_ ? 0.85 : 0.78;
	canvas.draw_rect(gcx - gap - 1.2, tip - 2.0, gcx - gap, tip + 3.0, prong_r, prong_g, 0.25);
	canvas.draw_rect(gcx + gap, tip - 2.0, gcx + gap + 1.2, tip + 3.0, prong_r, prong_g, 0.25);
	return canvas.to_observation();
}

torch::Tensor PhaseLiftEnv::block_mask() const
{
	auto mask = torch::zeros({kN, kN}, torch::kBool);
	double half = to_px(kBlockHalf);
	double bcx = to_px(bx_);
	double bcy = height_to_row(bh_);
	for (int row = std::max(0, static_cast<int>(bcy - half) - 1); row <= std::min(kN - 1, static_cast<int>(bcy + half) + 1);
		 ++row)
	{
		for (int col = std::max(0, static_cast<int>(bcx - half) - 1);
			 col <= std::min(kN - 1, static_cast<int>(bcx + half) + 1);
			 ++col)
		{
			mask[row][col] = true;
		}
	}
	return mask;
}

std::unique_ptr<ToyEnv> make_env(const std::string& name)
{
	if (name == "point_reach")
	{
		return std::make_unique<PointReachEnv>();
	}
	if (name == "phase_lift")
	{
		return std::make_unique<PhaseLiftEnv>();
	}
	throw std::invalid_argument("make_env: unknown environment '" + name + "'");
}

} // namespace dreamingv2
