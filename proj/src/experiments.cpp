#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "eotlab/errors.hpp"
#include "eotlab/regularity.hpp"

namespace eotlab {

unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("EOTLAB_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap >= 1) return static_cast<unsigned>(std::min<long>(cap, hw));
        } catch (const std::exception&) {
            // Unparsable values fall back to the hardware count.
        }
    }
    return hw;
}

namespace {

// Runs task(k) for k in [0, n) on up to worker_count() threads. Each task
// writes only its own slot, so the result does not depend on scheduling.
void for_each_point(std::size_t n, const std::function<void(std::size_t)>& task) {
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) task(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_lock;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    task(k);
                } catch (...) {
                    std::lock_guard<std::mutex> guard(failure_lock);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void require_ladder(const std::vector<double>& ladder, const char* who) {
    if (ladder.empty()) throw DomainError(std::string(who) + ": empty epsilon ladder");
    for (double e : ladder) {
        if (!(e > 0.0)) throw DomainError(std::string(who) + ": epsilon values must be positive");
    }
}

void require_ball_in_hull(const GridMeasure& m, double radius, const char* who) {
    const Vec lo = m.spec().lower_corner();
    const Vec hi = m.spec().upper_corner();
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
        if (lo[k] > -radius || hi[k] < radius) {
            throw DomainError(std::string(who) + ": grid hull does not contain the threshold ball");
        }
    }
}

}  // namespace

LongTrajTable long_traj_experiment(const GridMeasure& lam, const GridMeasure& mu, double R,
                                   const std::vector<double>& eps_ladder, const SinkhornOptions& opt,
                                   const LongTrajGeometry& geo) {
    if (!(R > 0.0)) throw DomainError("long_traj_experiment: R must be positive");
    require_ladder(eps_ladder, "long_traj_experiment");
    require_ball_in_hull(lam, geo.threshold * R, "long_traj_experiment");
    require_ball_in_hull(mu, geo.threshold * R, "long_traj_experiment");
    const int d = lam.dim();
    const AtomicMeasure a = lam.atoms();
    const AtomicMeasure b = mu.atoms();

    LongTrajTable table;
    table.rows.resize(eps_ladder.size());
    for_each_point(eps_ladder.size(), [&](std::size_t k) {
        SinkhornOptions o = opt;
        o.epsilon = eps_ladder[k];
        const SinkhornResult res = sinkhorn(a, b, o);
        const RegionMoments m =
            region_moments(res.plan, Region::long_trajectories(geo.inner * R, geo.threshold * R));
        LongTrajRow& row = table.rows[k];
        row.epsilon = o.epsilon;
        row.r2_over_eps2 = R * R / (o.epsilon * o.epsilon);
        row.energy = m.second_moment / std::pow(R, d + 2);
        row.mass = m.mass / std::pow(R, d);
        row.E5R = local_energy(res.plan, geo.energy * R);
        row.energy_ratio = row.E5R > 0.0 ? row.energy / row.E5R : 0.0;
        row.mass_ratio = row.E5R > 0.0 ? row.mass / row.E5R : 0.0;
        row.converged = res.converged;
    });

    std::vector<double> x;
    std::vector<double> ym;
    std::vector<double> ye;
    bool mass_ok = true;
    bool energy_ok = true;
    for (const auto& row : table.rows) {
        x.push_back(row.r2_over_eps2);
        mass_ok = mass_ok && row.mass_ratio > 0.0;
        energy_ok = energy_ok && row.energy_ratio > 0.0;
        ym.push_back(row.mass_ratio > 0.0 ? std::log(row.mass_ratio) : 0.0);
        ye.push_back(row.energy_ratio > 0.0 ? std::log(row.energy_ratio) : 0.0);
    }
    const bool spread = x.size() >= 2 && *std::max_element(x.begin(), x.end()) > *std::min_element(x.begin(), x.end());
    if (spread && mass_ok) table.slope_mass = fit_line(x, ym).slope;
    if (spread && energy_ok) table.slope_energy = fit_line(x, ye).slope;
    return table;
}

ExpansionTable expansion_experiment(const GridMeasure& lam, const GridMeasure& mu, const std::vector<double>& eps_ladder,
                                    const SinkhornOptions& opt) {
    require_ladder(eps_ladder, "expansion_experiment");
    if (lam.dim() != mu.dim()) throw InputError("expansion_experiment: dimension mismatch");
    ExpansionTable table;
    table.mass = lam.total_mass();
    require_equal_mass(table.mass, mu.total_mass(), "expansion_experiment");
    const AtomicMeasure a = lam.normalized().atoms();
    AtomicMeasure b = mu.normalized().atoms();
    b.weights *= a.total_mass() / b.total_mass();
    const double d = lam.dim();
    const double h = std::max(lam.spec().h, mu.spec().h);
    const double ot = exact_ot(a, b).cost;

    table.rows.resize(eps_ladder.size());
    for_each_point(eps_ladder.size(), [&](std::size_t k) {
        SinkhornOptions o = opt;
        o.epsilon = eps_ladder[k];
        const SinkhornResult res = sinkhorn(a, b, o);
        ExpansionRow& row = table.rows[k];
        const double e2 = o.epsilon * o.epsilon;
        row.epsilon = o.epsilon;
        row.ot_eps = entropic_cost(res);
        row.ot = ot;
        row.gap_over_eps2 = (row.ot_eps - ot) / e2;
        row.log_inv_eps2 = std::log(1.0 / e2);
        row.remainder = row.gap_over_eps2 - 0.5 * d * row.log_inv_eps2;
        row.resolved = o.epsilon >= 3.0 * h;
        row.converged = res.converged;
    });

    std::vector<double> x;
    std::vector<double> y;
    double rmax = 0.0;
    double rmin = std::numeric_limits<double>::infinity();
    for (const auto& row : table.rows) {
        if (!row.resolved) continue;
        x.push_back(row.log_inv_eps2);
        y.push_back(row.gap_over_eps2);
        rmax = std::max(rmax, std::abs(row.remainder));
        rmin = std::min(rmin, std::abs(row.remainder));
    }
    if (x.size() >= 2 && *std::max_element(x.begin(), x.end()) > *std::min_element(x.begin(), x.end())) {
        table.slope = fit_line(x, y).slope;
    }
    if (!x.empty()) {
        table.remainder_spread = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
    }
    return table;
}

}  // namespace eotlab
