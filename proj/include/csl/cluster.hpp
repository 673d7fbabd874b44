#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "csl/model.hpp"
#include "csl/optim.hpp"

namespace csl {

/// Communication meter. A "vector" is one d-dimensional real vector crossing
/// a machine boundary; transfers between a machine and itself are free.
struct CommLedger {
    std::uint64_t vectors_sent = 0;
    std::uint64_t scalars_sent = 0;
    std::uint64_t rounds = 0;
    /// Raw samples shipped to the center by pooled baselines. Outside the
    /// protocol and never folded into vectors_sent.
    std::uint64_t samples_moved = 0;
    std::int64_t d = 0;

    std::uint64_t bits() const { return 64ULL * static_cast<std::uint64_t>(d) * vectors_sent; }
    bool operator==(const CommLedger&) const = default;
    /// Counter differences since `earlier`.
    CommLedger since(const CommLedger& earlier) const;
};

enum class TransportKind { InProcess, Tcp };

/// Executes per-worker work. Index 0 is the center machine (worker 1).
class WorkerBackend {
public:
    virtual ~WorkerBackend() = default;
    virtual TransportKind kind() const = 0;
    virtual std::vector<Vector> gradients(const Vector& theta) = 0;
    virtual std::vector<Vector> local_minimizers(const SolverSettings& settings) = 0;
};

struct ClusterOptions {
    /// Threads used for in-process worker computation; 0 means one per core.
    std::size_t threads = 1;
};

struct GradientRound {
    Vector global_grad;
    std::vector<Vector> local_grads;
};

/// k machines, each holding one equal-size shard, plus the communication
/// ledger. Worker 1 (index 0) is the center: it broadcasts parameters,
/// gathers replies and reduces them in ascending worker order.
///
/// Rounds are bulk-synchronous and a Cluster is not safe for concurrent use.
class Cluster {
public:
    /// In-process cluster. Throws DomainError for k = 0 or unequal shard
    /// shapes.
    Cluster(std::vector<DataShard> shards, LossModel model, ClusterOptions options = {});
    /// Splits `data` into k consecutive equal blocks; N must be divisible by k.
    static Cluster partition(const DataShard& data, std::size_t k, LossModel model, ClusterOptions options = {});
    /// Cluster whose workers 2..k live behind TCP endpoints "host:port"
    /// (addresses.size() == k - 1). Each remote worker receives its shard via
    /// LOAD_SHARD on connect. The center's shard stays local.
    static Cluster connect_tcp(std::vector<DataShard> shards, LossModel model, const std::vector<std::string>& addresses);

    Cluster(Cluster&&) noexcept;
    Cluster& operator=(Cluster&&) noexcept;
    ~Cluster();

    std::size_t size() const { return shards_->size(); }
    Eigen::Index n() const { return (*shards_)[0].n(); }
    Eigen::Index d() const { return (*shards_)[0].d(); }
    Eigen::Index total_samples() const { return n() * static_cast<Eigen::Index>(size()); }
    const DataShard& shard(std::size_t j) const { return shards_->at(j); }
    std::shared_ptr<const std::vector<DataShard>> shards() const { return shards_; }
    const LossModel& model() const { return model_; }
    TransportKind transport() const;

    /// Broadcast theta, gather local gradients, average on the center.
    /// Costs 2(k-1) vectors and one round.
    GradientRound gradient_round(const Vector& theta);
    /// Local gradients without averaging; same cost as gradient_round.
    std::vector<Vector> gradient_vectors_at(const Vector& theta);
    /// Each worker minimizes its own loss by Newton from zero. Costs (k-1)
    /// reply vectors, (k-1) scalars (the tolerance) and one round.
    std::vector<Vector> local_minimizer_round(const SolverSettings& settings);
    /// Runs `fn(shard, index)` on every worker and gathers the resulting
    /// d-vectors; costs (k-1) reply vectors and one round. In-process only,
    /// since the wire protocol has no generic opcode.
    std::vector<Vector> local_map_round(const std::function<Vector(const DataShard&, std::size_t)>& fn);
    /// All shards concatenated at the center; meters n(k-1) moved samples.
    DataShard pooled();

    CommLedger comm_report() const { return ledger_; }

private:
    Cluster(std::shared_ptr<const std::vector<DataShard>> shards, LossModel model, std::unique_ptr<WorkerBackend> backend,
            std::size_t threads);

    std::shared_ptr<const std::vector<DataShard>> shards_;
    LossModel model_;
    std::unique_ptr<WorkerBackend> backend_;
    std::size_t threads_;
    CommLedger ledger_;
};

/// Newton objective for a shard's mean loss. The shard must outlive the
/// returned callables.
TwiceDifferentiable loss_objective(const LossModel& model, const DataShard& shard);
/// argmin of the shard's loss by Newton from the origin.
Vector local_minimizer(const LossModel& model, const DataShard& shard, const SolverSettings& settings);

/// Concatenates shards row-wise.
DataShard concatenate(const std::vector<DataShard>& shards);

/// Calls fn(j) for j in [0, count) on up to `threads` threads. Exceptions are
/// collected per index and the lowest-index one is rethrown.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace csl
