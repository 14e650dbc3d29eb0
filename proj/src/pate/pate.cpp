#include "mimic/pate/pate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "mimic/binary_io.hpp"
#include "mimic/corpus/io.hpp"
#include "mimic/parallel.hpp"

namespace mimic::pate {

namespace {

constexpr int kManifestVersion = 1;

std::string teacher_file(std::size_t i) { return "teacher_" + std::to_string(i) + ".ckpt"; }

/// Per-document teacher scores for one query, teacher-major.
std::vector<std::vector<double>> teacher_scores(const TeacherEnsemble& ensemble,
                                                const corpus::InvertedIndex& index,
                                                std::span<const TermId> query,
                                                std::span<const corpus::ScoredDoc> pool) {
  std::vector<std::vector<double>> out;
  out.reserve(ensemble.teachers.size());
  for (const auto& t : ensemble.teachers) {
    const rank::QueryScorer scorer(t, query);
    auto& row = out.emplace_back();
    row.reserve(pool.size());
    for (const auto& p : pool) row.push_back(scorer(index.doc_terms(p.doc)));
  }
  return out;
}

void require_vocabulary(const TeacherEnsemble& ensemble, const corpus::InvertedIndex& index) {
  if (ensemble.teachers.empty()) throw InvalidArgument("empty teacher ensemble");
  for (const auto& t : ensemble.teachers) {
    if (!(t.vocabulary == index.vocabulary())) {
      throw InvalidArgument("teacher vocabulary does not match the index vocabulary");
    }
  }
}

}  // namespace

void PrivacyConfig::validate() const {
  if (n_partitions == 0) throw InvalidArgument("n_partitions must be at least 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw InvalidArgument("noise_scale must be a finite non-negative number");
  }
}

Partition partition_data(std::span<const TrainingInstance> instances, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("partition count must be at least 1");
  if (n > instances.size()) {
    throw InvalidArgument("cannot split " + std::to_string(instances.size()) + " instances into " +
                          std::to_string(n) + " non-empty shards");
  }
  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> members(n);
  for (std::size_t pos = 0; pos < order.size(); ++pos) members[pos % n].push_back(order[pos]);
  Partition out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::sort(members[k].begin(), members[k].end());
    out[k].reserve(members[k].size());
    for (const auto i : members[k]) out[k].push_back(instances[i]);
  }
  return out;
}

TeacherEnsemble train_teachers(const Partition& partition, const rank::RankModelConfig& config,
                               const corpus::InvertedIndex& index, std::size_t epochs,
                               std::uint64_t base_seed, const PrivacyConfig& privacy,
                               const std::optional<std::filesystem::path>& embedding_file,
                               std::size_t jobs) {
  privacy.validate();
  if (partition.empty()) throw InvalidArgument("no shards to train teachers on");
  for (std::size_t k = 0; k < partition.size(); ++k) {
    if (partition[k].empty()) throw InvalidArgument("shard " + std::to_string(k) + " is empty");
  }
  TeacherEnsemble ensemble;
  ensemble.config = config;
  ensemble.privacy = privacy;
  ensemble.privacy.n_partitions = partition.size();
  ensemble.teachers.resize(partition.size());
  for (std::size_t k = 0; k < partition.size(); ++k) {
    ensemble.seeds.push_back(base_seed + k);
    ensemble.shard_hashes.push_back(hex64(fnv1a(corpus::format_annotations(partition[k]))));
  }
  parallel_for(partition.size(), jobs, [&](std::size_t k) {
    ensemble.teachers[k] =
        rank::fit(config, index, partition[k], epochs, ensemble.seeds[k], embedding_file).params;
  });
  return ensemble;
}

double laplace_sample(double scale, double u) {
  if (scale == 0.0) return 0.0;
  const double sgn = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
  return -scale * sgn * std::log(1.0 - 2.0 * std::abs(u));
}

double noisy_aggregate(const TeacherEnsemble& ensemble, std::span<const TermId> query,
                       std::span<const TermId> doc, NoiseStream& noise) {
  if (ensemble.teachers.empty()) throw InvalidArgument("empty teacher ensemble");
  double sum = 0.0;
  for (const auto& t : ensemble.teachers) sum += rank::score(t, query, doc) + noise.next();
  return sum / static_cast<double>(ensemble.teachers.size());
}

corpus::PoolLabeler aggregate_labeler(const TeacherEnsemble& ensemble, const corpus::InvertedIndex& index,
                                      double noise_scale, std::uint64_t noise_seed) {
  require_vocabulary(ensemble, index);
  return [&ensemble, &index, noise_scale, noise_seed](std::size_t qi, std::span<const TermId> query,
                                                      std::span<const corpus::ScoredDoc> pool) {
    const auto scores = teacher_scores(ensemble, index, query, pool);
    NoiseStream noise(noise_scale, derive_seed(noise_seed, qi));
    const auto n = static_cast<double>(scores.size());
    std::vector<double> out(pool.size());
    for (std::size_t d = 0; d < pool.size(); ++d) {
      double sum = 0.0;
      for (const auto& row : scores) sum += row[d] + noise.next();
      out[d] = sum / n;
    }
    return out;
  };
}

corpus::PoolLabeler mean_labeler(const TeacherEnsemble& ensemble, const corpus::InvertedIndex& index) {
  require_vocabulary(ensemble, index);
  return [&ensemble, &index](std::size_t, std::span<const TermId> query, std::span<const corpus::ScoredDoc> pool) {
    const auto scores = teacher_scores(ensemble, index, query, pool);
    std::vector<double> out(pool.size());
    for (std::size_t d = 0; d < pool.size(); ++d) {
      double sum = 0.0;
      for (const auto& row : scores) sum += row[d];
      out[d] = sum / static_cast<double>(scores.size());
    }
    return out;
  };
}

PateResult pate_distill(const TeacherEnsemble& ensemble, const rank::RankModelConfig& student_config,
                        const corpus::QuerySet& unlabeled, const corpus::InvertedIndex& index,
                        const distill::DistillOptions& options) {
  ensemble.privacy.validate();
  const auto labeler = aggregate_labeler(ensemble, index, ensemble.privacy.noise_scale, ensemble.privacy.seed);
  return {distill::distill_with_labeler(labeler, student_config, unlabeled, index, options,
                                        mean_labeler(ensemble, index))};
}

void save_ensemble(const std::filesystem::path& dir, const TeacherEnsemble& ensemble) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < ensemble.teachers.size(); ++i) {
    rank::save_checkpoint(dir / teacher_file(i), ensemble.config, ensemble.teachers[i]);
  }
  nlohmann::ordered_json m;
  m["format_version"] = kManifestVersion;
  m["n_partitions"] = ensemble.teachers.size();
  m["noise_scale"] = ensemble.privacy.noise_scale;
  m["privacy_seed"] = ensemble.privacy.seed;
  m["teacher_seeds"] = ensemble.seeds;
  m["shard_hashes"] = ensemble.shard_hashes;
  auto files = nlohmann::json::array();
  for (std::size_t i = 0; i < ensemble.teachers.size(); ++i) files.push_back(teacher_file(i));
  m["teachers"] = files;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

TeacherEnsemble load_ensemble(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  TeacherEnsemble ensemble;
  try {
    if (m.at("format_version").get<int>() != kManifestVersion) throw IoError("unsupported ensemble manifest");
    const auto n = m.at("n_partitions").get<std::size_t>();
    ensemble.privacy.n_partitions = n;
    ensemble.privacy.noise_scale = m.at("noise_scale").get<double>();
    ensemble.privacy.seed = m.at("privacy_seed").get<std::uint64_t>();
    ensemble.seeds = m.at("teacher_seeds").get<std::vector<std::uint64_t>>();
    ensemble.shard_hashes = m.at("shard_hashes").get<std::vector<std::string>>();
    const auto files = m.at("teachers").get<std::vector<std::string>>();
    if (files.size() != n || ensemble.seeds.size() != n) throw IoError("ensemble manifest counts disagree");
    for (std::size_t i = 0; i < n; ++i) {
      auto ck = rank::load_checkpoint(dir / files[i]);
      if (i == 0) {
        ensemble.config = ck.config;
      } else if (!(ck.config == ensemble.config) || !(ck.params.vocabulary == ensemble.teachers[0].vocabulary)) {
        throw IoError("teacher " + std::to_string(i) + " differs in architecture or vocabulary");
      }
      ensemble.teachers.push_back(std::move(ck.params));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  ensemble.privacy.validate();
  return ensemble;
}

}  // namespace mimic::pate
