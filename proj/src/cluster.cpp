#include "csl/cluster.hpp"

#include <exception>
#include <thread>

#include "csl/tcp.hpp"

namespace csl {

CommLedger CommLedger::since(const CommLedger& earlier) const {
    CommLedger delta;
    delta.vectors_sent = vectors_sent - earlier.vectors_sent;
    delta.scalars_sent = scalars_sent - earlier.scalars_sent;
    delta.rounds = rounds - earlier.rounds;
    delta.samples_moved = samples_moved - earlier.samples_moved;
    delta.d = d;
    return delta;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::exception_ptr> errors(count);
    auto run = [&](std::size_t j) {
        try {
            fn(j);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    };
    if (threads <= 1 || count <= 1) {
        for (std::size_t j = 0; j < count; ++j) run(j);
    } else {
        const std::size_t workers = std::min(threads, count);
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t j = t; j < count; j += workers) run(j);
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

TwiceDifferentiable loss_objective(const LossModel& model, const DataShard& shard) {
    const DataShard* s = &shard;
    return {
        [model, s](const Vector& t) { return loss_value(model, t, *s); },
        [model, s](const Vector& t) {
            auto vg = loss_value_gradient(model, t, *s);
            return Evaluation{vg.value, std::move(vg.gradient), loss_hessian(model, t, *s)};
        },
    };
}

Vector local_minimizer(const LossModel& model, const DataShard& shard, const SolverSettings& settings) {
    return newton_minimize(loss_objective(model, shard), Vector::Zero(shard.d()), settings);
}

namespace {

class InProcessBackend final : public WorkerBackend {
public:
    InProcessBackend(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model, std::size_t threads)
        : shards_(std::move(shards)), model_(model), threads_(threads) {}

    TransportKind kind() const override { return TransportKind::InProcess; }

    std::vector<Vector> gradients(const Vector& theta) override {
        std::vector<Vector> out(shards_->size());
        run_each([&](std::size_t j) { out[j] = loss_gradient(model_, theta, (*shards_)[j]); });
        return out;
    }

    std::vector<Vector> local_minimizers(const SolverSettings& settings) override {
        std::vector<Vector> out(shards_->size());
        run_each([&](std::size_t j) { out[j] = local_minimizer(model_, (*shards_)[j], settings); });
        return out;
    }

private:
    void run_each(const std::function<void(std::size_t)>& fn) {
        const std::size_t k = shards_->size();
        std::vector<std::exception_ptr> errors(k);
        parallel_for(k, threads_, [&](std::size_t j) {
            try {
                fn(j);
            } catch (const std::exception& e) {
                errors[j] = std::make_exception_ptr(RoundError(j + 1, e.what()));
            }
        });
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    std::shared_ptr<const std::vector<DataShard>> shards_;
    LossModel model_;
    std::size_t threads_;
};

std::shared_ptr<const std::vector<DataShard>> validate_shards(std::vector<DataShard> shards) {
    if (shards.empty()) throw DomainError("cluster: at least one worker is required");
    const auto n = shards[0].n();
    const auto d = shards[0].d();
    for (std::size_t j = 1; j < shards.size(); ++j) {
        if (shards[j].n() != n || shards[j].d() != d) {
            throw DomainError("cluster: shard " + std::to_string(j + 1) + " is " + std::to_string(shards[j].n()) + "x" +
                              std::to_string(shards[j].d()) + ", expected " + std::to_string(n) + "x" +
                              std::to_string(d) + " (equal shard sizes are required)");
        }
    }
    return std::make_shared<const std::vector<DataShard>>(std::move(shards));
}

}  // namespace

Cluster::Cluster(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model,
                 std::unique_ptr<WorkerBackend> backend, std::size_t threads)
    : shards_(std::move(shards)), model_(model), backend_(std::move(backend)), threads_(threads) {
    ledger_.d = (*shards_)[0].d();
}

Cluster::Cluster(std::vector<DataShard> shards, LossModel model, ClusterOptions options)
    : Cluster(validate_shards(std::move(shards)), model, nullptr, options.threads) {
    backend_ = std::make_unique<InProcessBackend>(shards_, model_, threads_);
}

Cluster Cluster::partition(const DataShard& data, std::size_t k, LossModel model, ClusterOptions options) {
    if (k == 0) throw DomainError("cluster: at least one worker is required");
    if (data.n() % static_cast<Eigen::Index>(k) != 0) {
        throw DomainError("cluster: " + std::to_string(data.n()) + " samples do not split into " + std::to_string(k) +
                          " equal shards");
    }
    const auto n = data.n() / static_cast<Eigen::Index>(k);
    std::vector<DataShard> shards;
    shards.reserve(k);
    for (std::size_t j = 0; j < k; ++j) shards.push_back(data.rows(static_cast<Eigen::Index>(j) * n, n));
    return Cluster(std::move(shards), model, options);
}

Cluster Cluster::connect_tcp(std::vector<DataShard> shards, LossModel model, const std::vector<std::string>& addresses) {
    auto validated = validate_shards(std::move(shards));
    if (addresses.size() + 1 != validated->size()) {
        throw DomainError("cluster: " + std::to_string(validated->size()) + " workers need " +
                          std::to_string(validated->size() - 1) + " remote addresses, got " +
                          std::to_string(addresses.size()));
    }
    auto backend = make_tcp_backend(validated, model, addresses);
    return Cluster(std::move(validated), model, std::move(backend), 1);
}

Cluster::Cluster(Cluster&&) noexcept = default;
Cluster& Cluster::operator=(Cluster&&) noexcept = default;
Cluster::~Cluster() = default;

TransportKind Cluster::transport() const { return backend_->kind(); }

GradientRound Cluster::gradient_round(const Vector& theta) {
    auto grads = gradient_vectors_at(theta);
    Vector sum = Vector::Zero(d());
    for (const auto& g : grads) sum += g;
    sum /= static_cast<double>(grads.size());
    return {std::move(sum), std::move(grads)};
}

std::vector<Vector> Cluster::gradient_vectors_at(const Vector& theta) {
    require_dim(theta, d(), "gradient round: parameter");
    if (!theta.allFinite()) throw DomainError("gradient round: non-finite parameter");
    auto grads = backend_->gradients(theta);
    const auto k = static_cast<std::uint64_t>(size());
    ledger_.vectors_sent += 2 * (k - 1);
    ledger_.rounds += 1;
    return grads;
}

std::vector<Vector> Cluster::local_minimizer_round(const SolverSettings& settings) {
    settings.validate();
    auto mins = backend_->local_minimizers(settings);
    const auto k = static_cast<std::uint64_t>(size());
    ledger_.scalars_sent += k - 1;
    ledger_.vectors_sent += k - 1;
    ledger_.rounds += 1;
    return mins;
}

std::vector<Vector> Cluster::local_map_round(const std::function<Vector(const DataShard&, std::size_t)>& fn) {
    if (transport() != TransportKind::InProcess) throw Error("cluster: local_map_round requires the in-process transport");
    std::vector<Vector> out(size());
    std::vector<std::exception_ptr> errors(size());
    parallel_for(size(), threads_, [&](std::size_t j) {
        try {
            out[j] = fn((*shards_)[j], j);
            require_dim(out[j], d(), "local round: reply");
        } catch (const std::exception& e) {
            errors[j] = std::make_exception_ptr(RoundError(j + 1, e.what()));
        }
    });
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    const auto k = static_cast<std::uint64_t>(size());
    ledger_.vectors_sent += k - 1;
    ledger_.rounds += 1;
    return out;
}

DataShard Cluster::pooled() {
    ledger_.samples_moved += static_cast<std::uint64_t>(n()) * (size() - 1);
    return concatenate(*shards_);
}

DataShard concatenate(const std::vector<DataShard>& shards) {
    if (shards.empty()) throw DomainError("concatenate: no shards");
    Eigen::Index rows = 0;
    for (const auto& s : shards) rows += s.n();
    Matrix x(rows, shards[0].d());
    Vector y(rows);
    Eigen::Index at = 0;
    for (const auto& s : shards) {
        if (s.d() != shards[0].d()) throw DimensionError("concatenate: column counts differ");
        x.middleRows(at, s.n()) = s.x();
        y.segment(at, s.n()) = s.y();
        at += s.n();
    }
    return DataShard(std::move(x), std::move(y));
}

}  // namespace csl
