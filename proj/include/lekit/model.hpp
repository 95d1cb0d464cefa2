#pragma once
#include <cstdint>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lekit/matrix.hpp"
#include "lekit/rng.hpp"
#include "lekit/tape.hpp"

namespace lekit {

/// Additive floor under every deviation head; keeps both sigma outputs
/// strictly positive so their logs and reciprocals stay finite.
inline constexpr double kSigmaFloor = 1e-6;

struct DenseLayer {
  Matrix w;  // in x out
  Matrix b;  // 1 x out
};

/// Shared trunk (two sigmoid layers) plus linear heads for the latent mean
/// and pre-softplus deviation.
struct EncoderParams {
  DenseLayer fc1, fc2, mu_head, sigma_head;
};

/// Three dense layers; the first two are sigmoid, the output activation
/// depends on which head the stack serves.
struct HeadStack {
  DenseLayer fc1, fc2, out;
};

/// Full model: encoder, logical-label decoder, gap-deviation head and
/// label-distribution head, the latter three consuming the latent code.
struct LibParams {
  std::size_t input_dim = 0, hidden_dim = 0, latent_dim = 0, label_dim = 0;
  EncoderParams encoder;
  HeadStack decoder;   // latent -> c, linear output
  HeadStack gap_head;  // latent -> c, softplus + floor
  HeadStack ld_head;   // latent -> c, row softmax
};

/// Ablation variant: deviation and distribution heads read the features
/// directly, no encoder and no decoder.
struct LibGapParams {
  std::size_t input_dim = 0, hidden_dim = 0, label_dim = 0;
  HeadStack gap_head;  // q -> c, softplus + floor
  HeadStack ld_head;   // q -> c, row softmax
};

struct LatentBatch {
  Matrix mu, sigma, epsilon, h;  // h = mu + sigma (*) epsilon, exactly
};

struct LossBreakdown {
  double total = 0.0;
  double assignment_term = 0.0;  // logical-label reconstruction
  double gap_term = 0.0;         // sigma-weighted gap quadratic + log-det
  double kl_term = 0.0;          // encoder regularizer
  double alpha = 0.0, beta = 0.0;
};

// ---- initialization --------------------------------------------------------

namespace detail {
inline DenseLayer init_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  return {uniform_matrix(rng, in, out, -bound, bound), Matrix::zeros(1, out)};
}
inline HeadStack init_stack(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {init_layer(in, hidden, rng), init_layer(hidden, hidden, rng),
          init_layer(hidden, out, rng)};
}
}  // namespace detail

inline LibParams init_lib_params(std::size_t input_dim, std::size_t hidden_dim,
                                 std::size_t latent_dim, std::size_t label_dim, Rng& rng) {
  LibParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.latent_dim = latent_dim;
  p.label_dim = label_dim;
  p.encoder.fc1 = detail::init_layer(input_dim, hidden_dim, rng);
  p.encoder.fc2 = detail::init_layer(hidden_dim, hidden_dim, rng);
  p.encoder.mu_head = detail::init_layer(hidden_dim, latent_dim, rng);
  p.encoder.sigma_head = detail::init_layer(hidden_dim, latent_dim, rng);
  p.decoder = detail::init_stack(latent_dim, hidden_dim, label_dim, rng);
  p.gap_head = detail::init_stack(latent_dim, hidden_dim, label_dim, rng);
  p.ld_head = detail::init_stack(latent_dim, hidden_dim, label_dim, rng);
  return p;
}

inline LibGapParams init_libgap_params(std::size_t input_dim, std::size_t hidden_dim,
                                       std::size_t label_dim, Rng& rng) {
  LibGapParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.label_dim = label_dim;
  p.gap_head = detail::init_stack(input_dim, hidden_dim, label_dim, rng);
  p.ld_head = detail::init_stack(input_dim, hidden_dim, label_dim, rng);
  return p;
}

// ---- named parameter blocks ------------------------------------------------
// Fixed ordering shared by the trainer, the checkpoint format and the loss
// graphs: gradients and optimizer state line up with these by index.

struct ConstBlockRef {
  std::string name;
  const Matrix* value;
};

struct BlockRef {
  std::string name;
  Matrix* value;
};

namespace detail {
inline void push_layer(std::vector<ConstBlockRef>& out, const std::string& prefix,
                       const DenseLayer& l) {
  out.push_back({prefix + ".w", &l.w});
  out.push_back({prefix + ".b", &l.b});
}
inline void push_stack(std::vector<ConstBlockRef>& out, const std::string& prefix,
                       const HeadStack& s) {
  push_layer(out, prefix + ".fc1", s.fc1);
  push_layer(out, prefix + ".fc2", s.fc2);
  push_layer(out, prefix + ".out", s.out);
}
}  // namespace detail

inline std::vector<ConstBlockRef> param_blocks(const LibParams& p) {
  std::vector<ConstBlockRef> out;
  detail::push_layer(out, "encoder.fc1", p.encoder.fc1);
  detail::push_layer(out, "encoder.fc2", p.encoder.fc2);
  detail::push_layer(out, "encoder.mu", p.encoder.mu_head);
  detail::push_layer(out, "encoder.sigma", p.encoder.sigma_head);
  detail::push_stack(out, "decoder", p.decoder);
  detail::push_stack(out, "gap_head", p.gap_head);
  detail::push_stack(out, "ld_head", p.ld_head);
  return out;
}

inline std::vector<ConstBlockRef> param_blocks(const LibGapParams& p) {
  std::vector<ConstBlockRef> out;
  detail::push_stack(out, "gap_head", p.gap_head);
  detail::push_stack(out, "ld_head", p.ld_head);
  return out;
}

template <class Params>
std::vector<BlockRef> param_blocks(Params& p)
  requires(!std::is_const_v<Params> &&
           (std::is_same_v<Params, LibParams> || std::is_same_v<Params, LibGapParams>))
{
  std::vector<BlockRef> out;
  for (const ConstBlockRef& b : param_blocks(std::as_const(p)))
    out.push_back({b.name, const_cast<Matrix*>(b.value)});
  return out;
}

// ---- plain forward (inference path) ----------------------------------------

namespace detail {
inline Matrix dense_plain(const Matrix& x, const DenseLayer& l) {
  Matrix y = matmul(x, l.w);
  for (std::size_t i = 0; i < y.rows; ++i)
    for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += l.b(0, j);
  return y;
}
inline Matrix trunk_plain(const Matrix& x, const DenseLayer& fc1, const DenseLayer& fc2) {
  return map_sigmoid(dense_plain(map_sigmoid(dense_plain(x, fc1)), fc2));
}
inline void check_input(const char* op, const Matrix& x, std::size_t want_cols) {
  if (x.cols != want_cols)
    throw ShapeError(op, x.shape_str(), "nx" + std::to_string(want_cols));
  if (!x.all_finite()) throw NumericError(op, "non-finite input entry");
}
}  // namespace detail

/// Latent Gaussian moments for a feature batch: mu unconstrained, sigma
/// strictly positive (softplus output plus floor).
inline std::pair<Matrix, Matrix> encode(const LibParams& p, const Matrix& X) {
  detail::check_input("encode", X, p.input_dim);
  const Matrix a = detail::trunk_plain(X, p.encoder.fc1, p.encoder.fc2);
  Matrix mu = detail::dense_plain(a, p.encoder.mu_head);
  Matrix sigma = add_scalar(map_softplus(detail::dense_plain(a, p.encoder.sigma_head)), kSigmaFloor);
  return {std::move(mu), std::move(sigma)};
}

/// h = mu + sigma (*) eps with eps drawn standard normal from the seed.
inline LatentBatch sample_latent(const Matrix& mu, const Matrix& sigma, std::uint64_t rng_seed) {
  if (!mu.same_shape(sigma)) throw ShapeError("sample_latent", mu.shape_str(), sigma.shape_str());
  for (double v : sigma.data)
    if (!(v > 0.0)) throw NumericError("sample_latent", "sigma must be strictly positive");
  Rng rng(rng_seed);
  LatentBatch out;
  out.mu = mu;
  out.sigma = sigma;
  out.epsilon = normal_matrix(rng, mu.rows, mu.cols);
  out.h = add(mu, hadamard(sigma, out.epsilon));
  return out;
}

/// Mean of the Gaussian logical-label likelihood; linear output.
inline Matrix decode_logical(const LibParams& p, const Matrix& h) {
  detail::check_input("decode_logical", h, p.latent_dim);
  return detail::dense_plain(detail::trunk_plain(h, p.decoder.fc1, p.decoder.fc2), p.decoder.out);
}

/// Per-label gap deviation; softplus output with floor, always > 0.
inline Matrix gap_sigma(const LibParams& p, const Matrix& h) {
  detail::check_input("gap_sigma", h, p.latent_dim);
  return add_scalar(
      map_softplus(detail::dense_plain(detail::trunk_plain(h, p.gap_head.fc1, p.gap_head.fc2),
                                       p.gap_head.out)),
      kSigmaFloor);
}

/// Recovered label distribution; row-softmax output, rows sum to one.
inline Matrix recover_distribution(const LibParams& p, const Matrix& h) {
  detail::check_input("recover_distribution", h, p.latent_dim);
  return row_softmax(
      detail::dense_plain(detail::trunk_plain(h, p.ld_head.fc1, p.ld_head.fc2), p.ld_head.out));
}

/// Deterministic recovery: the latent is taken at its posterior mean
/// (epsilon fixed to zero), so repeated calls agree bit for bit.
inline Matrix recover_all(const LibParams& p, const Matrix& X) {
  auto [mu, sigma] = encode(p, X);
  (void)sigma;
  return recover_distribution(p, mu);
}

/// Ablation recovery: the distribution head reads the features directly.
inline Matrix recover_all(const LibGapParams& p, const Matrix& X) {
  detail::check_input("recover_all", X, p.input_dim);
  return row_softmax(
      detail::dense_plain(detail::trunk_plain(X, p.ld_head.fc1, p.ld_head.fc2), p.ld_head.out));
}

// ---- loss graphs (training path) -------------------------------------------

namespace detail {
inline void check_labels(const Matrix& L, std::size_t n, std::size_t c) {
  if (L.rows != n || L.cols != c)
    throw ShapeError("logical labels", L.shape_str(),
                     std::to_string(n) + "x" + std::to_string(c));
  for (double v : L.data)
    if (v != 0.0 && v != 1.0) throw DataError("logical labels must be 0 or 1");
}

template <class F>
auto term_context(const char* term, F&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(term, e.what());
  }
}
}  // namespace detail

/// Node handles into a LIB loss graph. `param_ids` is aligned with
/// param_blocks(params).
struct LibLossGraph {
  std::vector<NodeId> param_ids;
  NodeId assignment = kNoNode;
  NodeId gap = kNoNode;
  NodeId kl = kNoNode;
  NodeId total = kNoNode;
  NodeId mu = kNoNode;
  NodeId sigma = kNoNode;
  std::vector<NodeId> h;      // one per Monte-Carlo draw
  std::vector<NodeId> d_hat;  // one per Monte-Carlo draw
};

/// Records the full training objective on the tape:
///   total = assignment + alpha * gap + beta * kl
/// with every term a per-instance mean. Each Monte-Carlo draw shares its
/// sampled latent across the assignment and gap terms.
inline LibLossGraph build_lib_loss(Tape& t, const LibParams& p, const Matrix& X, const Matrix& L,
                                   const std::vector<Matrix>& eps_draws, double alpha,
                                   double beta) {
  detail::check_input("loss_lib", X, p.input_dim);
  const std::size_t n = X.rows;
  detail::check_labels(L, n, p.label_dim);
  if (eps_draws.empty()) throw ConfigError("loss_lib: need at least one epsilon draw");
  for (const Matrix& e : eps_draws)
    if (e.rows != n || e.cols != p.latent_dim)
      throw ShapeError("loss_lib epsilon", e.shape_str(),
                       std::to_string(n) + "x" + std::to_string(p.latent_dim));

  LibLossGraph g;
  const std::vector<ConstBlockRef> blocks = param_blocks(p);
  std::vector<NodeId> ids;
  ids.reserve(blocks.size());
  for (const ConstBlockRef& b : blocks) ids.push_back(t.parameter(*b.value));
  g.param_ids = ids;
  auto id_of = [&](const char* name) -> NodeId {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].name == name) return ids[i];
    throw Error(std::string("loss graph: unknown block ") + name);
  };

  const NodeId x = t.constant(X);
  const NodeId l = t.constant(L);
  const NodeId ones_n = t.constant(Matrix::ones(n, 1));
  const NodeId floor_lat = t.constant(Matrix::full(n, p.latent_dim, kSigmaFloor));
  const NodeId floor_lab = t.constant(Matrix::full(n, p.label_dim, kSigmaFloor));
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_s = 1.0 / static_cast<double>(eps_draws.size());

  auto dense = [&](NodeId in, const char* w, const char* b) {
    return t.add(t.matmul(in, id_of(w)), t.matmul(ones_n, id_of(b)));
  };

  // encoder
  detail::term_context("latent", [&] {
    const NodeId a1 = t.sigmoid(dense(x, "encoder.fc1.w", "encoder.fc1.b"));
    const NodeId a2 = t.sigmoid(dense(a1, "encoder.fc2.w", "encoder.fc2.b"));
    g.mu = dense(a2, "encoder.mu.w", "encoder.mu.b");
    g.sigma = t.add(t.softplus(dense(a2, "encoder.sigma.w", "encoder.sigma.b")), floor_lat);
    return 0;
  });

  // kl_term = (1/n) sum_i 0.5 [mu_i . mu_i + sum_j sigma^2 - sum_j log sigma^2]
  detail::term_context("kl_term", [&] {
    const NodeId sig2 = t.square(g.sigma);
    const NodeId inner = t.sub(t.add(t.sum_all(t.square(g.mu)), t.sum_all(sig2)),
                               t.sum_all(t.log(sig2)));
    g.kl = t.scalar_mul(inner, 0.5 * inv_n);
    return 0;
  });

  NodeId assignment_acc = kNoNode;
  NodeId gap_acc = kNoNode;
  for (const Matrix& eps : eps_draws) {
    const NodeId eps_node = t.constant(eps);
    const NodeId h = t.add(g.mu, t.mul(g.sigma, eps_node));
    g.h.push_back(h);

    // assignment_term = (1/n) sum_i 0.5 ||mu_{l|h_i} - l_i||^2
    const NodeId assignment_s = detail::term_context("assignment_term", [&] {
      const NodeId d1 = t.sigmoid(dense(h, "decoder.fc1.w", "decoder.fc1.b"));
      const NodeId d2 = t.sigmoid(dense(d1, "decoder.fc2.w", "decoder.fc2.b"));
      const NodeId mu_lh = dense(d2, "decoder.out.w", "decoder.out.b");
      return t.scalar_mul(t.sum_all(t.square(t.sub(mu_lh, l))), 0.5 * inv_n);
    });

    // gap_term = (1/n) sum_i [0.5 (l-dhat)^T diag(sd^-2) (l-dhat) + sum_j log sd^2]
    const NodeId gap_s = detail::term_context("gap_term", [&] {
      const NodeId g1 = t.sigmoid(dense(h, "gap_head.fc1.w", "gap_head.fc1.b"));
      const NodeId g2 = t.sigmoid(dense(g1, "gap_head.fc2.w", "gap_head.fc2.b"));
      const NodeId sd = t.add(t.softplus(dense(g2, "gap_head.out.w", "gap_head.out.b")), floor_lab);
      const NodeId r1 = t.sigmoid(dense(h, "ld_head.fc1.w", "ld_head.fc1.b"));
      const NodeId r2 = t.sigmoid(dense(r1, "ld_head.fc2.w", "ld_head.fc2.b"));
      const NodeId d_hat = t.row_softmax(dense(r2, "ld_head.out.w", "ld_head.out.b"));
      g.d_hat.push_back(d_hat);
      const NodeId logsd2 = t.log(t.square(sd));
      const NodeId inv_sd2 = t.exp(t.scalar_mul(logsd2, -1.0));
      const NodeId quad = t.scalar_mul(t.sum_all(t.mul(t.square(t.sub(l, d_hat)), inv_sd2)),
                                       0.5 * inv_n);
      return t.add(quad, t.scalar_mul(t.sum_all(logsd2), inv_n));
    });

    assignment_acc = assignment_acc == kNoNode ? assignment_s : t.add(assignment_acc, assignment_s);
    gap_acc = gap_acc == kNoNode ? gap_s : t.add(gap_acc, gap_s);
  }
  g.assignment = eps_draws.size() == 1 ? assignment_acc : t.scalar_mul(assignment_acc, inv_s);
  g.gap = eps_draws.size() == 1 ? gap_acc : t.scalar_mul(gap_acc, inv_s);

  g.total = t.add(t.add(g.assignment, t.scalar_mul(g.gap, alpha)), t.scalar_mul(g.kl, beta));
  return g;
}

/// Node handles into the ablation loss graph.
struct LibGapLossGraph {
  std::vector<NodeId> param_ids;
  NodeId total = kNoNode;
  NodeId d_hat = kNoNode;
};

/// Ablation objective: the sigma-weighted gap quadratic plus log-det, as a
/// per-instance mean, with both heads reading the features directly.
inline LibGapLossGraph build_libgap_loss(Tape& t, const LibGapParams& p, const Matrix& X,
                                         const Matrix& L) {
  detail::check_input("loss_lib_gap", X, p.input_dim);
  const std::size_t n = X.rows;
  detail::check_labels(L, n, p.label_dim);

  LibGapLossGraph g;
  const std::vector<ConstBlockRef> blocks = param_blocks(p);
  std::vector<NodeId> ids;
  for (const ConstBlockRef& b : blocks) ids.push_back(t.parameter(*b.value));
  g.param_ids = ids;
  auto id_of = [&](const char* name) -> NodeId {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].name == name) return ids[i];
    throw Error(std::string("loss graph: unknown block ") + name);
  };

  const NodeId x = t.constant(X);
  const NodeId l = t.constant(L);
  const NodeId ones_n = t.constant(Matrix::ones(n, 1));
  const NodeId floor_lab = t.constant(Matrix::full(n, p.label_dim, kSigmaFloor));
  const double inv_n = 1.0 / static_cast<double>(n);

  auto dense = [&](NodeId in, const char* w, const char* b) {
    return t.add(t.matmul(in, id_of(w)), t.matmul(ones_n, id_of(b)));
  };

  g.total = detail::term_context("gap_term", [&] {
    const NodeId g1 = t.sigmoid(dense(x, "gap_head.fc1.w", "gap_head.fc1.b"));
    const NodeId g2 = t.sigmoid(dense(g1, "gap_head.fc2.w", "gap_head.fc2.b"));
    const NodeId sd = t.add(t.softplus(dense(g2, "gap_head.out.w", "gap_head.out.b")), floor_lab);
    const NodeId r1 = t.sigmoid(dense(x, "ld_head.fc1.w", "ld_head.fc1.b"));
    const NodeId r2 = t.sigmoid(dense(r1, "ld_head.fc2.w", "ld_head.fc2.b"));
    g.d_hat = t.row_softmax(dense(r2, "ld_head.out.w", "ld_head.out.b"));
    const NodeId logsd2 = t.log(t.square(sd));
    const NodeId inv_sd2 = t.exp(t.scalar_mul(logsd2, -1.0));
    const NodeId quad = t.scalar_mul(t.sum_all(t.mul(t.square(t.sub(l, g.d_hat)), inv_sd2)),
                                     0.5 * inv_n);
    return t.add(quad, t.scalar_mul(t.sum_all(logsd2), inv_n));
  });
  return g;
}

// ---- loss evaluation helpers ------------------------------------------------

/// Epsilon draws for one optimization step: `mc_samples` matrices pulled
/// sequentially from the generator. loss_lib and the trainer share this rule
/// so a seed pins the exact draws.
inline std::vector<Matrix> draw_epsilon(Rng& rng, std::size_t n, std::size_t latent_dim,
                                        std::size_t mc_samples) {
  std::vector<Matrix> draws;
  draws.reserve(mc_samples);
  for (std::size_t s = 0; s < mc_samples; ++s) draws.push_back(normal_matrix(rng, n, latent_dim));
  return draws;
}

/// Evaluates the training objective once. Pure in (params, X, L, seed).
inline LossBreakdown loss_lib(const LibParams& p, const Matrix& X, const Matrix& L,
                              std::uint64_t rng_seed, double alpha, double beta,
                              std::size_t mc_samples = 1) {
  Rng rng(rng_seed);
  const std::vector<Matrix> eps = draw_epsilon(rng, X.rows, p.latent_dim, mc_samples);
  Tape t;
  const LibLossGraph g = build_lib_loss(t, p, X, L, eps, alpha, beta);
  LossBreakdown out;
  out.assignment_term = t.value(g.assignment)(0, 0);
  out.gap_term = t.value(g.gap)(0, 0);
  out.kl_term = t.value(g.kl)(0, 0);
  out.total = t.value(g.total)(0, 0);
  out.alpha = alpha;
  out.beta = beta;
  return out;
}

/// Evaluates the ablation objective once. Deterministic (no sampling).
inline double loss_lib_gap(const LibGapParams& p, const Matrix& X, const Matrix& L) {
  Tape t;
  const LibGapLossGraph g = build_libgap_loss(t, p, X, L);
  return t.value(g.total)(0, 0);
}

}  // namespace lekit
