//! Reference computations used by the test suites.
//!
//! Nothing here depends on `jumpmart`: paths are plain slices of jump times
//! and sizes, and every routine is a direct, slow transcription of the
//! definition it checks.

/// Driver value `Σ_{t_i ≤ t} z_i − drift·t`.
pub fn driver_at(times: &[f64], sizes: &[f64], drift: f64, t: f64) -> f64 {
    let jumps: f64 = times
        .iter()
        .zip(sizes)
        .take_while(|(&s, _)| s <= t)
        .map(|(_, &z)| z)
        .sum();
    jumps - drift * t
}

/// Sampled driver on the union of `{k·step}`, the jump times and `t`.
///
/// Each node carries `(time, left_limit, value)`. Walking the nodes in order
/// is enough to get exact suprema because the driver is monotone between
/// jumps.
pub fn driver_nodes(
    times: &[f64],
    sizes: &[f64],
    drift: f64,
    t: f64,
    step: f64,
) -> Vec<(f64, f64, f64)> {
    let mut nodes = Vec::new();
    let mut cum = 0.0;
    let mut j = 0;
    let mut k = 0u64;
    loop {
        let grid = (k as f64 * step).min(t);
        let jump = times
            .get(j)
            .copied()
            .filter(|&s| s <= t)
            .unwrap_or(f64::INFINITY);
        if jump <= grid {
            let left = cum - drift * jump;
            cum += sizes[j];
            nodes.push((jump, left, cum - drift * jump));
            j += 1;
            if jump == grid {
                k += 1;
            }
            continue;
        }
        let v = cum - drift * grid;
        if nodes.last().is_none_or(|n: &(f64, f64, f64)| n.0 < grid) {
            nodes.push((grid, v, v));
        }
        if grid >= t {
            break;
        }
        k += 1;
    }
    nodes
}

/// `sup_{s ≤ t} M²_{s−}` by scanning [`driver_nodes`].
pub fn brute_force_running_sup(times: &[f64], sizes: &[f64], drift: f64, t: f64, step: f64) -> f64 {
    let nodes = driver_nodes(times, sizes, drift, t, step);
    let mut sup = 0.0f64;
    for (i, &(_, left, value)) in nodes.iter().enumerate() {
        sup = sup.max(left * left);
        // the post-jump value is a left limit for every later time
        if i + 1 < nodes.len() {
            sup = sup.max(value * value);
        }
    }
    sup
}

/// First node where `1 + sup_{s ≤ node} M²_s >= n`, or `None` before `t`.
/// Overshoots a continuous crossing by less than `step`.
pub fn brute_force_sigma(
    times: &[f64],
    sizes: &[f64],
    drift: f64,
    t: f64,
    step: f64,
    n: f64,
) -> Option<f64> {
    if n <= 1.0 {
        return Some(0.0);
    }
    let mut sup = 0.0f64;
    for (s, left, value) in driver_nodes(times, sizes, drift, t, step) {
        sup = sup.max(left * left).max(value * value);
        if 1.0 + sup >= n {
            return Some(s);
        }
    }
    None
}

/// Euler scheme for `z_t = 1 + ∫ z_{s−} α(s) dM_s` with `α(s) = alpha(sup_{u<s} M²_{u−})`.
///
/// Drift steps use `α` at the left node; jumps use the predictable value.
pub fn euler_exponential(
    times: &[f64],
    sizes: &[f64],
    drift: f64,
    horizon: f64,
    step: f64,
    alpha: impl Fn(f64) -> f64,
) -> f64 {
    let nodes = driver_nodes(times, sizes, drift, horizon, step);
    let mut z = 1.0;
    let mut sup = 0.0f64;
    let mut prev = 0.0;
    for &(s, left, value) in &nodes {
        z *= 1.0 - alpha(sup) * drift * (s - prev);
        sup = sup.max(left * left);
        if value != left {
            z *= 1.0 + alpha(sup) * (value - left);
        }
        sup = sup.max(value * value);
        prev = s;
    }
    z
}

/// Composite Simpson rule with `n` (rounded up to even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Poisson probabilities `P(N = k)` for `k = 0..len`.
pub fn poisson_pmf(mean: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut p = (-mean).exp();
    for k in 0..len {
        out.push(p);
        p *= mean / (k + 1) as f64;
    }
    out
}

/// Moments of a compound Poisson sum `Σ_{i ≤ N} g(Z_i)` through the
/// probability generating function: `E Π h(Z_i) = exp(λT (E h(Z) − 1))`.
pub fn compound_poisson_product_mean(rate: f64, horizon: f64, mean_h: f64) -> f64 {
    (rate * horizon * (mean_h - 1.0)).exp()
}

/// `E z_T^p` for a constant control `a` and jump sizes given as atoms
/// `(size, probability)`: `z_T = e^{−a m1 T} Π (1 + a Z_i)`.
pub fn constant_control_power_mean(
    a: f64,
    rate: f64,
    horizon: f64,
    atoms: &[(f64, f64)],
    p: f64,
) -> f64 {
    let m1: f64 = atoms.iter().map(|&(z, w)| z * w).sum::<f64>() * rate;
    let mean_h: f64 = atoms.iter().map(|&(z, w)| w * (1.0 + a * z).powf(p)).sum();
    (-p * a * m1 * horizon).exp() * compound_poisson_product_mean(rate, horizon, mean_h)
}

/// `E[z_T log z_T]` for a constant control and atomic sizes, from the
/// tilted description: rate `λ(1 + a E Z)`, size law `∝ (1 + a z) K(dz)`.
pub fn constant_control_tilted_log(a: f64, rate: f64, horizon: f64, atoms: &[(f64, f64)]) -> f64 {
    let m1: f64 = atoms.iter().map(|&(z, w)| z * w).sum::<f64>() * rate;
    let tilted_rate: f64 = atoms.iter().map(|&(z, w)| rate * w * (1.0 + a * z)).sum();
    let mean_log: f64 = atoms
        .iter()
        .map(|&(z, w)| rate * w * (1.0 + a * z) * (1.0 + a * z).ln())
        .sum::<f64>()
        / tilted_rate;
    -a * m1 * horizon + tilted_rate * horizon * mean_log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_include_jumps_and_end() {
        let nodes = driver_nodes(&[0.25], &[2.0], 1.0, 0.6, 0.2);
        let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        assert_eq!(times, vec![0.0, 0.2, 0.25, 0.4, 0.6]);
        assert_eq!(nodes[2].1, -0.25);
        assert_eq!(nodes[2].2, 1.75);
    }

    #[test]
    fn running_sup_hand_values() {
        // without jumps M = −t, so sup M²_{s−} over [0, 2] is 4
        assert_eq!(brute_force_running_sup(&[], &[], 1.0, 2.0, 0.01), 4.0);
        // jump of 2 at t = 0.5 lifts M to 1.5
        let sup = brute_force_running_sup(&[0.5], &[2.0], 1.0, 1.0, 0.01);
        assert!((sup - 2.25).abs() < 1e-12);
        // at t = 0.5 only the left limit −0.5 counts
        let sup = brute_force_running_sup(&[0.5], &[2.0], 1.0, 0.5, 0.01);
        assert!((sup - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sigma_hand_values() {
        assert_eq!(brute_force_sigma(&[], &[], 1.0, 3.0, 1e-3, 5.0), Some(2.0));
        assert_eq!(
            brute_force_sigma(&[0.5], &[3.0], 1.0, 1.0, 1e-3, 5.0),
            Some(0.5)
        );
        assert_eq!(brute_force_sigma(&[], &[], 1.0, 1.0, 1e-3, 5.0), None);
    }

    #[test]
    fn euler_constant_control() {
        // z_T = e^{−a} (1 + a) for one unit jump, a = 0.5
        let z = euler_exponential(&[0.3], &[1.0], 1.0, 1.0, 1e-5, |_| 0.5);
        assert!((z - 1.5 * (-0.5f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn closed_forms() {
        let atoms = [(1.0, 1.0)];
        assert!((constant_control_power_mean(0.5, 1.0, 1.0, &atoms, 1.0) - 1.0).abs() < 1e-15);
        let second = constant_control_power_mean(0.5, 1.0, 1.0, &atoms, 2.0);
        assert!((second - 0.25f64.exp()).abs() < 1e-14);
        let tl = constant_control_tilted_log(0.5, 1.0, 1.0, &atoms);
        assert!((tl - (-0.5 + 1.5 * 1.5f64.ln())).abs() < 1e-15);
        let p = poisson_pmf(2.0, 40);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((simpson(|x| x * x, 0.0, 3.0, 10) - 9.0).abs() < 1e-12);
    }
}
