#pragma once

#include "flowguide/tasks.hpp"
#include "flowguide/toml.hpp"
#include "flowguide/train.hpp"

#include <optional>
#include <set>

namespace flowguide {

// Strict schema access: every key must be consumed, unknown keys are rejected
// when the reader is finished.
class TableReader {
public:
    TableReader(const TomlValue& table, std::string path)
        : table_(&table), path_(std::move(path)) {
        if (!table.is_table()) throw ConfigError(path_ + " must be a table");
    }

    bool has(const std::string& key) const { return table_->find(key) != nullptr; }

    const TomlValue& require(const std::string& key) {
        const TomlValue* v = table_->find(key);
        if (!v) throw ConfigError(path_ + ": missing required key '" + key + "'");
        used_.insert(key);
        return *v;
    }

    const TomlValue* optional(const std::string& key) {
        const TomlValue* v = table_->find(key);
        if (v) used_.insert(key);
        return v;
    }

    std::string get_string(const std::string& key) { return require(key).as_string(); }
    std::string get_string(const std::string& key, const std::string& dflt) {
        const TomlValue* v = optional(key);
        return v ? v->as_string() : dflt;
    }
    double get_double(const std::string& key) { return require(key).as_double(); }
    double get_double(const std::string& key, double dflt) {
        const TomlValue* v = optional(key);
        return v ? v->as_double() : dflt;
    }
    std::int64_t get_int(const std::string& key) { return require(key).as_int(); }
    std::int64_t get_int(const std::string& key, std::int64_t dflt) {
        const TomlValue* v = optional(key);
        return v ? v->as_int() : dflt;
    }
    bool get_bool(const std::string& key, bool dflt) {
        const TomlValue* v = optional(key);
        return v ? v->as_bool() : dflt;
    }

    std::vector<double> get_double_array(const std::string& key) {
        return to_double_array(require(key), key);
    }
    std::optional<std::vector<double>> get_double_array_opt(const std::string& key) {
        const TomlValue* v = optional(key);
        if (!v) return std::nullopt;
        return to_double_array(*v, key);
    }
    std::vector<std::vector<double>> get_nested_array(const std::string& key) {
        const TomlValue& v = require(key);
        std::vector<std::vector<double>> out;
        for (const auto& row : v.items()) out.push_back(to_double_array(row, key));
        return out;
    }
    std::vector<std::string> get_string_array(const std::string& key) {
        const TomlValue& v = require(key);
        std::vector<std::string> out;
        for (const auto& item : v.items()) out.push_back(item.as_string());
        return out;
    }
    std::vector<int> get_int_array(const std::string& key) {
        const TomlValue& v = require(key);
        std::vector<int> out;
        for (const auto& item : v.items()) out.push_back(static_cast<int>(item.as_int()));
        return out;
    }

    TableReader sub(const std::string& key) {
        const TomlValue& v = require(key);
        return TableReader(v, path_ + "." + key);
    }
    std::optional<TableReader> sub_opt(const std::string& key) {
        const TomlValue* v = optional(key);
        if (!v) return std::nullopt;
        return TableReader(*v, path_ + "." + key);
    }

    // Strict-mode gate: reject anything not consumed.
    void done() const {
        for (const auto& [k, v] : table_->entries()) {
            if (!used_.count(k))
                throw ConfigError(path_ + ": unknown key '" + k + "'");
        }
    }

private:
    std::vector<double> to_double_array(const TomlValue& v, const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : v.items()) {
            if (!item.is_number()) throw ConfigError(path_ + "." + key + ": expected numbers");
            out.push_back(item.as_double());
        }
        return out;
    }

    const TomlValue* table_;
    std::string path_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------------------

inline Vec to_vec(const std::vector<double>& v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
    return out;
}

struct VerifyStudyConfig {
    std::vector<std::string> studies;
    int n_models = 10;
    std::vector<int> dims = {2, 8};
    OrderStudyConfig order;
    GreedyIdealStudyConfig greedy_ideal;
    GreedyConvergenceConfig convergence;
    std::optional<Vec> convergence_target;
    int control_steps = 1024;
    int cross_steps = 256;
};

struct SampleBlock {
    int n_runs = 1;
    std::optional<Vec> x0;
    int max_trajectories = 8;  // CSV cap
};

struct GuideBlock {
    std::string mode = "sample";  // sample | e2e
    GuidanceRun run;
    int n_runs = 100;
    std::optional<Vec> hit_target;
    double hit_radius = 0.5;
    bool baseline = true;
    int max_curves = 8;
    E2eOptConfig e2e;
    std::optional<Vec> e2e_x0;
};

struct TrainBlock {
    TrainConfig train;
    MicroMlpSpec arch;
    std::string weights_out = "mlp_weights.bin";
};

// Parsed and validated experiment description. Building the heavyweight
// objects is deferred to accessors so each subcommand touches only what it
// needs (e.g. `verify` may run without a [model] block).
class ExperimentConfig {
public:
    static ExperimentConfig parse(const TomlValue& root) {
        ExperimentConfig cfg;
        TableReader top(root, "config");
        cfg.name_ = top.get_string("name");
        if (cfg.name_.empty() || cfg.name_.find('/') != std::string::npos)
            throw ConfigError("name must be a non-empty path-free identifier");
        cfg.seed_ = static_cast<std::uint64_t>(top.get_int("seed", 0));
        cfg.outdir_ = top.get_string("outdir", "out");

        // [schedule]
        if (auto sched = top.sub_opt("schedule")) {
            const std::string kind = sched->get_string("kind", "cond_ot");
            const double eps = sched->get_double("eps", 1e-3);
            if (kind == "cond_ot") cfg.schedule_ = Schedule::cond_ot(eps);
            else if (kind == "variance_preserving") cfg.schedule_ = Schedule::variance_preserving(eps);
            else throw ConfigError("schedule.kind must be cond_ot or variance_preserving");
            sched->done();
        } else {
            cfg.schedule_ = Schedule::cond_ot();
        }

        // [model]
        if (auto model = top.sub_opt("model")) {
            const std::string type = model->get_string("type", "mixture");
            if (type == "mixture") {
                const int dim = static_cast<int>(model->get_int("dim"));
                const auto weights = model->get_double_array("weights");
                const auto means = model->get_nested_array("means");
                std::vector<Vec> mu;
                for (const auto& m : means) {
                    if (static_cast<int>(m.size()) != dim)
                        throw ConfigError("model.means rows must have length dim");
                    mu.push_back(to_vec(m));
                }
                std::vector<Mat> cov;
                if (model->has("covariances")) {
                    for (const auto& c : model->get_nested_array("covariances")) {
                        if (static_cast<int>(c.size()) != dim * dim)
                            throw ConfigError("model.covariances rows must be row-major dim*dim");
                        Mat m(dim, dim);
                        for (int r = 0; r < dim; ++r)
                            for (int cidx = 0; cidx < dim; ++cidx)
                                m(r, cidx) = c[static_cast<std::size_t>(r * dim + cidx)];
                        cov.push_back(m);
                    }
                } else {
                    const double scale = model->get_double("cov_scale", 1.0);
                    cov.assign(weights.size(), scale * Mat::Identity(dim, dim));
                }
                cfg.mixture_.emplace(weights, mu, cov);
            } else if (type == "mlp") {
                cfg.mlp_weights_path_ = model->get_string("weights_path");
            } else {
                throw ConfigError("model.type must be mixture or mlp");
            }
            model->done();
        }

        // [solver]
        if (auto solver = top.sub_opt("solver")) {
            cfg.solver_.scheme = parse_scheme(solver->get_string("scheme", "euler"));
            cfg.solver_.n_steps = static_cast<int>(solver->get_int("n_steps", 64));
            const std::string grid = solver->get_string("grid", "uniform_t");
            if (grid == "uniform_t") cfg.solver_.grid = GridKind::UniformT;
            else if (grid == "uniform_gamma") cfg.solver_.grid = GridKind::UniformGamma;
            else if (grid == "poly_edm") cfg.solver_.grid = GridKind::PolynomialEdm;
            else throw ConfigError("solver.grid must be uniform_t, uniform_gamma or poly_edm");
            cfg.solver_.rho = solver->get_double("rho", 7.0);
            cfg.solver_.t_start = solver->get_double("t_start", 0.0);
            solver->done();
        }

        // [loss] / [problem]
        if (auto loss = top.sub_opt("loss")) {
            const std::string kind = loss->get_string("kind");
            if (kind == "quadratic") {
                cfg.loss_.emplace(Loss::quadratic(to_vec(loss->get_double_array("target"))));
            } else if (kind == "linear_measurement") {
                const auto rows = loss->get_nested_array("matrix");
                const auto y = loss->get_double_array("y");
                if (rows.empty() || rows.size() != y.size())
                    throw ConfigError("loss.matrix rows must match y length");
                Mat A(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    if (rows[r].size() != rows[0].size())
                        throw ConfigError("loss.matrix must be rectangular");
                    for (std::size_t c = 0; c < rows[r].size(); ++c)
                        A(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
                }
                cfg.loss_.emplace(Loss::linear_measurement(A, to_vec(y), loss->get_double("beta_y")));
            } else if (kind == "nonlinear_squash") {
                cfg.loss_.emplace(Loss::squash_measurement(to_vec(loss->get_double_array("y")),
                                                           loss->get_double("beta_y"),
                                                           loss->get_double("scale", 2.0)));
            } else {
                throw ConfigError("loss.kind must be quadratic, linear_measurement or nonlinear_squash");
            }
            loss->done();
        }
        if (auto prob = top.sub_opt("problem")) {
            const std::string kind = prob->get_string("kind");
            MeasurementKind mk;
            if (kind == "random_projection") mk = MeasurementKind::RandomProjection;
            else if (kind == "mask") mk = MeasurementKind::Mask;
            else if (kind == "nonlinear_squash") mk = MeasurementKind::NonlinearSquash;
            else throw ConfigError("problem.kind must be random_projection, mask or nonlinear_squash");
            const Vec truth = to_vec(prob->get_double_array("truth"));
            const double beta_y = prob->get_double("beta_y");
            const int d_y = static_cast<int>(prob->get_int("d_y", 1));
            std::vector<int> mask;
            if (prob->has("mask")) mask = prob->get_int_array("mask");
            const auto problem_seed = static_cast<std::uint64_t>(prob->get_int("problem_seed", 1));
            cfg.problem_ = make_inverse_problem(mk, d_y, mask, truth, beta_y, problem_seed);
            if (cfg.loss_) throw ConfigError("specify either [loss] or [problem], not both");
            cfg.loss_.emplace(cfg.problem_->to_loss());
            prob->done();
        }

        // [guide] + [guidance] + [e2e]
        if (auto guide = top.sub_opt("guide")) {
            cfg.guide_.mode = guide->get_string("mode", "sample");
            if (cfg.guide_.mode != "sample" && cfg.guide_.mode != "e2e")
                throw ConfigError("guide.mode must be sample or e2e");
            guide->done();
        }
        if (auto guidance = top.sub_opt("guidance")) {
            GuidanceRun& run = cfg.guide_.run;
            const std::string engine = guidance->get_string("engine", "greedy_euler");
            if (engine == "greedy_euler") run.engine = Engine::GreedyEuler;
            else if (engine == "greedy_midpoint") run.engine = Engine::GreedyMidpoint;
            else if (engine == "greedy_kstep") run.engine = Engine::GreedyKStepEuler;
            else if (engine == "dto") run.engine = Engine::DtoFull;
            else throw ConfigError("guidance.engine must be greedy_euler, greedy_midpoint, greedy_kstep or dto");
            run.kstep = static_cast<int>(guidance->get_int("kstep", 2));
            run.dto_steps = static_cast<int>(guidance->get_int("dto_steps", 16));
            run.inner_steps = static_cast<int>(guidance->get_int("inner_steps", 1));
            run.eta.eta = guidance->get_double("eta");
            const std::string sched = guidance->get_string("eta_schedule", "constant");
            if (sched == "constant") run.eta.kind = EtaScheduleKind::Constant;
            else if (sched == "annealed") run.eta.kind = EtaScheduleKind::AnnealedLinearCutoff;
            else throw ConfigError("guidance.eta_schedule must be constant or annealed");
            run.eta.t_cut = guidance->get_double("t_cut", 0.0);
            cfg.guide_.n_runs = static_cast<int>(guidance->get_int("n_runs", 100));
            if (auto ht = guidance->get_double_array_opt("hit_target"))
                cfg.guide_.hit_target = to_vec(*ht);
            cfg.guide_.hit_radius = guidance->get_double("hit_radius", 0.5);
            cfg.guide_.baseline = guidance->get_bool("baseline", true);
            cfg.guide_.max_curves = static_cast<int>(guidance->get_int("max_curves", 8));
            guidance->done();
        }
        if (auto e2e = top.sub_opt("e2e")) {
            cfg.guide_.e2e.iterations = static_cast<int>(e2e->get_int("iterations", 100));
            cfg.guide_.e2e.lr = e2e->get_double("lr", 0.1);
            cfg.guide_.e2e.momentum = e2e->get_double("momentum", 0.0);
            if (auto x0 = e2e->get_double_array_opt("x0")) cfg.guide_.e2e_x0 = to_vec(*x0);
            e2e->done();
        }

        // [sample]
        if (auto sample = top.sub_opt("sample")) {
            cfg.sample_.n_runs = static_cast<int>(sample->get_int("n_runs", 1));
            if (auto x0 = sample->get_double_array_opt("x0")) cfg.sample_.x0 = to_vec(*x0);
            cfg.sample_.max_trajectories =
                static_cast<int>(sample->get_int("max_trajectories", 8));
            sample->done();
        }

        // [train]
        if (auto train = top.sub_opt("train")) {
            cfg.train_.train.steps = static_cast<int>(train->get_int("steps", 20000));
            cfg.train_.train.batch = static_cast<int>(train->get_int("batch", 64));
            cfg.train_.train.lr = train->get_double("lr", 1e-2);
            cfg.train_.train.holdout = static_cast<int>(train->get_int("holdout", 2048));
            cfg.train_.train.loss_threshold = train->get_double("loss_threshold", -1.0);
            cfg.train_.arch.hidden1 = static_cast<int>(train->get_int("hidden1", 64));
            cfg.train_.arch.hidden2 = static_cast<int>(train->get_int("hidden2", 64));
            cfg.train_.arch.weight_seed = static_cast<std::uint64_t>(train->get_int("weight_seed", 1));
            cfg.train_.weights_out = train->get_string("weights_out", "mlp_weights.bin");
            train->done();
        }

        // [verify]
        if (auto verify = top.sub_opt("verify")) {
            cfg.verify_.studies = verify->get_string_array("studies");
            cfg.verify_.n_models = static_cast<int>(verify->get_int("n_models", 10));
            if (verify->has("dims")) cfg.verify_.dims = verify->get_int_array("dims");
            if (auto order = verify->sub_opt("order")) {
                cfg.verify_.order.s = order->get_double("s", cfg.verify_.order.s);
                cfg.verify_.order.t_max = order->get_double("t_max", cfg.verify_.order.t_max);
                cfg.verify_.order.n_points =
                    static_cast<int>(order->get_int("n_points", cfg.verify_.order.n_points));
                cfg.verify_.order.n_probes =
                    static_cast<int>(order->get_int("n_probes", cfg.verify_.order.n_probes));
                cfg.verify_.order.ref_steps =
                    static_cast<int>(order->get_int("ref_steps", cfg.verify_.order.ref_steps));
                order->done();
            }
            if (auto gi = verify->sub_opt("greedy_ideal")) {
                if (auto hs = gi->get_double_array_opt("hs_gamma"))
                    cfg.verify_.greedy_ideal.hs_gamma = *hs;
                cfg.verify_.greedy_ideal.ref_steps = static_cast<int>(
                    gi->get_int("ref_steps", cfg.verify_.greedy_ideal.ref_steps));
                gi->done();
            }
            if (auto conv = verify->sub_opt("convergence")) {
                if (auto ts = conv->get_double_array_opt("ts")) cfg.verify_.convergence.ts = *ts;
                if (auto star = conv->get_double_array_opt("target"))
                    cfg.verify_.convergence_target = to_vec(*star);
                conv->done();
            }
            if (auto ctl = verify->sub_opt("control")) {
                cfg.verify_.control_steps =
                    static_cast<int>(ctl->get_int("n_steps", cfg.verify_.control_steps));
                ctl->done();
            }
            if (auto cross = verify->sub_opt("cross")) {
                cfg.verify_.cross_steps =
                    static_cast<int>(cross->get_int("n_steps", cfg.verify_.cross_steps));
                cross->done();
            }
            verify->done();
        }

        top.done();
        return cfg;
    }

    const std::string& name() const { return name_; }
    std::uint64_t seed() const { return seed_; }
    void override_seed(std::uint64_t s) { seed_ = s; }
    const std::string& outdir() const { return outdir_; }
    const Schedule& schedule() const { return schedule_; }
    const SolverConfig& solver() const { return solver_; }
    const SampleBlock& sample() const { return sample_; }
    GuideBlock& guide() { return guide_; }
    const GuideBlock& guide() const { return guide_; }
    const TrainBlock& train() const { return train_; }
    const VerifyStudyConfig& verify() const { return verify_; }
    const std::optional<InverseProblem>& problem() const { return problem_; }

    bool has_model() const { return mixture_.has_value() || !mlp_weights_path_.empty(); }
    bool has_loss() const { return loss_.has_value(); }
    bool has_mixture() const { return mixture_.has_value(); }

    const GaussianMixtureTarget& mixture() const {
        if (!mixture_) throw ConfigError("config: [model] with type=mixture required");
        return *mixture_;
    }

    PosteriorModel build_model() const {
        if (mixture_) return PosteriorModel(schedule_, *mixture_);
        if (!mlp_weights_path_.empty())
            return PosteriorModel(schedule_, MicroMlp::load(mlp_weights_path_));
        throw ConfigError("config: [model] block required for this command");
    }

    const Loss& loss() const {
        if (!loss_) throw ConfigError("config: [loss] or [problem] block required");
        return *loss_;
    }

private:
    static Scheme parse_scheme(const std::string& s) {
        if (s == "euler") return Scheme::Euler;
        if (s == "midpoint") return Scheme::Midpoint;
        if (s == "rk4") return Scheme::RK4;
        if (s == "exp_euler") return Scheme::ExpEuler;
        if (s == "reparam_gamma_euler") return Scheme::ReparamGammaEuler;
        throw ConfigError("solver.scheme must be euler, midpoint, rk4, exp_euler or reparam_gamma_euler");
    }

    std::string name_;
    std::uint64_t seed_ = 0;
    std::string outdir_ = "out";
    Schedule schedule_ = Schedule::cond_ot();
    std::optional<GaussianMixtureTarget> mixture_;
    std::string mlp_weights_path_;
    SolverConfig solver_;
    std::optional<Loss> loss_;
    std::optional<InverseProblem> problem_;
    GuideBlock guide_;
    SampleBlock sample_;
    TrainBlock train_;
    VerifyStudyConfig verify_;
};

}  // namespace flowguide
