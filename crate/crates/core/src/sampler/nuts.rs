//! No-U-Turn sampler: multinomial trajectory sampling over doubling trees
//! (Hoffman & Gelman 2014; Betancourt 2017), dual-averaging step-size
//! adaptation, and windowed diagonal mass-matrix estimation during warm-up.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{PosteriorDraws, SamplerConfig, SamplerError};

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_ENERGY_ERROR: f64 = 1000.0;

// Dual-averaging constants (Hoffman & Gelman defaults).
const DA_GAMMA: f64 = 0.05;
const DA_T0: f64 = 10.0;
const DA_KAPPA: f64 = 0.75;

// Warm-up schedule: fast start, doubling slow windows, fast tail.
const INIT_BUFFER: usize = 75;
const TERM_BUFFER: usize = 50;
const BASE_WINDOW: usize = 25;

const INIT_JITTER: f64 = 2.0;
const MAX_INIT_TRIES: usize = 100;

/// One symplectic leapfrog step with a diagonal mass matrix: half-step
/// momentum, full-step position along M^-1 p, half-step momentum.
pub fn leapfrog<G>(
    position: &[f64],
    momentum: &[f64],
    step: f64,
    grad_fn: G,
    mass_diag: &[f64],
) -> (Vec<f64>, Vec<f64>)
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let dim = position.len();
    let grad = grad_fn(position);
    let mut p_half = vec![0.0; dim];
    let mut q_new = vec![0.0; dim];
    for i in 0..dim {
        p_half[i] = momentum[i] + 0.5 * step * grad[i];
        q_new[i] = position[i] + step * p_half[i] / mass_diag[i];
    }
    let grad_new = grad_fn(&q_new);
    let mut p_new = vec![0.0; dim];
    for i in 0..dim {
        p_new[i] = p_half[i] + 0.5 * step * grad_new[i];
    }
    (q_new, p_new)
}

#[derive(Clone)]
struct PhasePoint {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl PhasePoint {
    /// H = -log p(q) + 0.5 * sum p_i^2 / m_i.
    fn energy(&self, inv_mass: &[f64]) -> f64 {
        let kinetic: f64 = self
            .p
            .iter()
            .zip(inv_mass)
            .map(|(p, im)| 0.5 * p * p * im)
            .sum();
        -self.logp + kinetic
    }
}

struct Target<'a, F, G> {
    log_density: &'a F,
    grad: &'a G,
}

impl<F, G> Target<'_, F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn leapfrog(&self, from: &PhasePoint, step: f64, inv_mass: &[f64]) -> PhasePoint {
        let dim = from.q.len();
        let mut p = vec![0.0; dim];
        let mut q = vec![0.0; dim];
        for i in 0..dim {
            p[i] = from.p[i] + 0.5 * step * from.grad[i];
            q[i] = from.q[i] + step * p[i] * inv_mass[i];
        }
        let grad = (self.grad)(&q);
        let logp = (self.log_density)(&q);
        for i in 0..dim {
            p[i] += 0.5 * step * grad[i];
        }
        PhasePoint { q, p, grad, logp }
    }
}

/// The trajectory is turning when the momentum at either end points back
/// across the span between the endpoints.
fn is_uturn(left: &PhasePoint, right: &PhasePoint, inv_mass: &[f64]) -> bool {
    let mut dot_left = 0.0;
    let mut dot_right = 0.0;
    for i in 0..left.q.len() {
        let span = right.q[i] - left.q[i];
        dot_left += span * left.p[i] * inv_mass[i];
        dot_right += span * right.p[i] * inv_mass[i];
    }
    dot_left < 0.0 || dot_right < 0.0
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

struct Subtree {
    left: PhasePoint,
    right: PhasePoint,
    proposal: PhasePoint,
    log_sum_weight: f64,
    accept_sum: f64,
    n_leapfrog: usize,
    turning: bool,
    diverging: bool,
}

#[allow(clippy::too_many_arguments)]
fn build_subtree<F, G>(
    target: &Target<'_, F, G>,
    from: &PhasePoint,
    depth: usize,
    step: f64,
    h0: f64,
    inv_mass: &[f64],
    rng: &mut ChaCha8Rng,
) -> Subtree
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if depth == 0 {
        let next = target.leapfrog(from, step, inv_mass);
        let delta_h = next.energy(inv_mass) - h0;
        let diverging = !delta_h.is_finite() || delta_h > MAX_ENERGY_ERROR;
        let log_weight = if diverging {
            f64::NEG_INFINITY
        } else {
            -delta_h
        };
        let accept = if delta_h.is_finite() {
            (-delta_h).exp().min(1.0)
        } else {
            0.0
        };
        return Subtree {
            left: next.clone(),
            right: next.clone(),
            proposal: next,
            log_sum_weight: log_weight,
            accept_sum: accept,
            n_leapfrog: 1,
            turning: false,
            diverging,
        };
    }

    let inner = build_subtree(target, from, depth - 1, step, h0, inv_mass, rng);
    if inner.diverging || inner.turning {
        return inner;
    }
    let grow_from = if step > 0.0 {
        &inner.right
    } else {
        &inner.left
    };
    let outer = build_subtree(target, grow_from, depth - 1, step, h0, inv_mass, rng);

    let accept_sum = inner.accept_sum + outer.accept_sum;
    let n_leapfrog = inner.n_leapfrog + outer.n_leapfrog;
    if outer.diverging || outer.turning {
        return Subtree {
            left: inner.left,
            right: inner.right,
            proposal: inner.proposal,
            log_sum_weight: inner.log_sum_weight,
            accept_sum,
            n_leapfrog,
            turning: outer.turning,
            diverging: outer.diverging,
        };
    }

    // Multinomial sampling within the merged subtree.
    let log_sum_weight = log_sum_exp(inner.log_sum_weight, outer.log_sum_weight);
    let take_outer = rng.random::<f64>() < (outer.log_sum_weight - log_sum_weight).exp();
    let proposal = if take_outer {
        outer.proposal
    } else {
        inner.proposal
    };
    let (left, right) = if step > 0.0 {
        (inner.left, outer.right)
    } else {
        (outer.left, inner.right)
    };
    let turning = is_uturn(&left, &right, inv_mass);
    Subtree {
        left,
        right,
        proposal,
        log_sum_weight,
        accept_sum,
        n_leapfrog,
        turning,
        diverging: false,
    }
}

struct Transition {
    point: PhasePoint,
    divergent: bool,
    depth: usize,
    accept_stat: f64,
}

fn nuts_transition<F, G>(
    target: &Target<'_, F, G>,
    current: PhasePoint,
    step: f64,
    inv_mass: &[f64],
    mass_sqrt: &[f64],
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Transition
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let dim = current.q.len();
    let mut point = current;
    for i in 0..dim {
        let z: f64 = rng.sample(StandardNormal);
        point.p[i] = z * mass_sqrt[i];
    }
    let h0 = point.energy(inv_mass);

    let mut left = point.clone();
    let mut right = point.clone();
    let mut proposal = point.clone();
    let mut log_sum_weight = 0.0;
    let mut accept_sum = 0.0;
    let mut n_leapfrog = 0usize;
    let mut divergent = false;
    let mut depth = 0usize;

    while depth < max_depth {
        let forward = rng.random::<bool>();
        let direction = if forward { step } else { -step };
        let grow_from = if forward { &right } else { &left };
        let subtree = build_subtree(target, grow_from, depth, direction, h0, inv_mass, rng);
        accept_sum += subtree.accept_sum;
        n_leapfrog += subtree.n_leapfrog;

        if subtree.diverging {
            divergent = true;
            break;
        }
        if subtree.turning {
            break;
        }

        // Biased progressive sampling: favor the fresh subtree.
        let accept_prob = (subtree.log_sum_weight - log_sum_weight).exp().min(1.0);
        if rng.random::<f64>() < accept_prob {
            proposal = subtree.proposal.clone();
        }
        log_sum_weight = log_sum_exp(log_sum_weight, subtree.log_sum_weight);
        if forward {
            right = subtree.right;
        } else {
            left = subtree.left;
        }
        depth += 1;

        if is_uturn(&left, &right, inv_mass) {
            break;
        }
    }

    let accept_stat = if n_leapfrog > 0 {
        accept_sum / n_leapfrog as f64
    } else {
        0.0
    };
    Transition {
        point: proposal,
        divergent,
        depth,
        accept_stat,
    }
}

/// Step-size search: double or halve until one leapfrog step crosses an
/// acceptance ratio of one half.
fn find_reasonable_step<F, G>(
    target: &Target<'_, F, G>,
    point: &PhasePoint,
    start: f64,
    inv_mass: &[f64],
    mass_sqrt: &[f64],
    rng: &mut ChaCha8Rng,
) -> f64
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut probe = point.clone();
    for i in 0..probe.p.len() {
        let z: f64 = rng.sample(StandardNormal);
        probe.p[i] = z * mass_sqrt[i];
    }
    let h0 = probe.energy(inv_mass);
    let mut eps = start.clamp(1e-10, 1e10);

    let ratio_at = |eps: f64| -> f64 {
        let next = target.leapfrog(&probe, eps, inv_mass);
        let delta = h0 - next.energy(inv_mass);
        if delta.is_finite() {
            delta.exp()
        } else {
            0.0
        }
    };

    let doubling = ratio_at(eps) > 0.5;
    for _ in 0..60 {
        let ratio = ratio_at(eps);
        if doubling {
            if ratio <= 0.5 {
                break;
            }
            eps *= 2.0;
        } else {
            if ratio >= 0.5 {
                break;
            }
            eps *= 0.5;
        }
        if !(1e-10..=1e10).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e10)
}

struct DualAveraging {
    mu: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: f64,
    target_accept: f64,
}

impl DualAveraging {
    fn new(eps: f64, target_accept: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps).ln(),
            log_eps_bar: eps.ln(),
            h_bar: 0.0,
            count: 0.0,
            target_accept,
        }
    }

    fn update(&mut self, accept_stat: f64) -> f64 {
        self.count += 1.0;
        let w = 1.0 / (self.count + DA_T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target_accept - accept_stat);
        let log_eps = self.mu - self.count.sqrt() / DA_GAMMA * self.h_bar;
        let eta = self.count.powf(-DA_KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// End indices (exclusive) of the slow mass-adaptation windows.
fn slow_window_ends(warmup: usize) -> Vec<usize> {
    if warmup < INIT_BUFFER + TERM_BUFFER + BASE_WINDOW {
        return Vec::new();
    }
    let slow_end = warmup - TERM_BUFFER;
    let mut ends = Vec::new();
    let mut start = INIT_BUFFER;
    let mut size = BASE_WINDOW;
    loop {
        let mut end = start + size;
        // Extend the final window to the start of the terminal buffer.
        if end + 2 * size > slow_end {
            end = slow_end;
        }
        ends.push(end);
        if end >= slow_end {
            break;
        }
        start = end;
        size *= 2;
    }
    ends
}

struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Regularized variance estimate, shrunk slightly toward a small constant.
    fn regularized_variance(&self) -> Option<Vec<f64>> {
        if self.count < 2 {
            return None;
        }
        let n = self.count as f64;
        Some(
            self.m2
                .iter()
                .map(|m2| {
                    let var = m2 / (n - 1.0);
                    (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                })
                .collect(),
        )
    }
}

pub(super) struct ChainRun {
    pub draws: Vec<f64>,
    pub divergences: usize,
    pub depth_histogram: Vec<u64>,
    pub step_size: f64,
    pub mass_diag: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_chain<F, G>(
    log_density: &F,
    grad: &G,
    dim: usize,
    config: &SamplerConfig,
    chain_index: u64,
) -> Result<ChainRun, SamplerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let target = Target { log_density, grad };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain_index + 1);

    // Jittered initialization, retried until the density is finite.
    let mut current = None;
    for _ in 0..MAX_INIT_TRIES {
        let q: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-INIT_JITTER..INIT_JITTER))
            .collect();
        let logp = log_density(&q);
        if logp.is_finite() {
            let g = grad(&q);
            if g.iter().all(|v| v.is_finite()) {
                current = Some(PhasePoint {
                    p: vec![0.0; dim],
                    grad: g,
                    logp,
                    q,
                });
                break;
            }
        }
    }
    let mut current = current.ok_or(SamplerError::StartupFailure(MAX_INIT_TRIES))?;

    let mut mass_diag = vec![1.0; dim]; // M: momentum covariance
    let mut inv_mass = vec![1.0; dim];
    let mut mass_sqrt = vec![1.0; dim];

    let mut eps = config.step_size_init;
    if config.warmup > 0 {
        eps = find_reasonable_step(&target, &current, eps, &inv_mass, &mass_sqrt, &mut rng);
    }
    let mut da = DualAveraging::new(eps, config.target_accept);

    let window_ends = slow_window_ends(config.warmup);
    let mut window_idx = 0;
    let mut welford = Welford::new(dim);

    let mut draws = Vec::with_capacity(config.draws_per_chain * dim);
    let mut divergences = 0usize;
    let mut depth_histogram = vec![0u64; config.max_tree_depth + 1];

    let total = config.warmup + config.draws_per_chain;
    for iter in 0..total {
        let warming = iter < config.warmup;
        let transition = nuts_transition(
            &target,
            current,
            eps,
            &inv_mass,
            &mass_sqrt,
            config.max_tree_depth,
            &mut rng,
        );
        current = transition.point;

        if warming {
            eps = da.update(transition.accept_stat);
            if window_idx < window_ends.len() {
                let window_start = if window_idx == 0 {
                    INIT_BUFFER
                } else {
                    window_ends[window_idx - 1]
                };
                if iter >= window_start {
                    welford.push(&current.q);
                }
                if iter + 1 == window_ends[window_idx] {
                    if let Some(var) = welford.regularized_variance() {
                        for i in 0..dim {
                            inv_mass[i] = var[i];
                            mass_diag[i] = 1.0 / var[i];
                            mass_sqrt[i] = mass_diag[i].sqrt();
                        }
                        eps = find_reasonable_step(
                            &target, &current, eps, &inv_mass, &mass_sqrt, &mut rng,
                        );
                        da = DualAveraging::new(eps, config.target_accept);
                    }
                    welford = Welford::new(dim);
                    window_idx += 1;
                }
            }
            if iter + 1 == config.warmup {
                eps = da.adapted();
            }
        } else {
            if transition.divergent {
                divergences += 1;
            }
            depth_histogram[transition.depth.min(config.max_tree_depth)] += 1;
            draws.extend_from_slice(&current.q);
        }
    }

    Ok(ChainRun {
        draws,
        divergences,
        depth_histogram,
        step_size: eps,
        mass_diag,
    })
}

/// Run NUTS chains in parallel and collect post-warm-up draws. Each chain
/// derives an independent random stream from the master seed and its index,
/// so results are reproducible regardless of thread scheduling.
pub fn run_nuts<F, G>(
    log_density: F,
    grad: G,
    dim: usize,
    config: &SamplerConfig,
) -> Result<PosteriorDraws, SamplerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if dim == 0 {
        return Err(SamplerError::ZeroDim);
    }
    if config.chains == 0 || config.draws_per_chain == 0 {
        return Err(SamplerError::EmptyRun);
    }
    let start = std::time::Instant::now();
    let runs: Vec<Result<ChainRun, SamplerError>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&log_density, &grad, dim, config, c as u64))
        .collect();

    let mut draws = Vec::with_capacity(config.chains * config.draws_per_chain * dim);
    let mut divergence_count = Vec::with_capacity(config.chains);
    let mut tree_depth_histogram = Vec::with_capacity(config.chains);
    let mut step_size = Vec::with_capacity(config.chains);
    let mut mass_diag = Vec::with_capacity(config.chains);
    for run in runs {
        let run = run?;
        draws.extend_from_slice(&run.draws);
        divergence_count.push(run.divergences);
        tree_depth_histogram.push(run.depth_histogram);
        step_size.push(run.step_size);
        mass_diag.push(run.mass_diag);
    }

    Ok(PosteriorDraws {
        dim,
        chains: config.chains,
        draws_per_chain: config.draws_per_chain,
        draws,
        divergence_count,
        tree_depth_histogram,
        step_size,
        mass_diag,
        wall_time: start.elapsed(),
    })
}
