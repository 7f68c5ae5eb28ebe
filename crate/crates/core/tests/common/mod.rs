//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use dd_core::market::ContractGrid;
use dd_core::utility::{ServiceUtility, UtilitySpec};
use dd_core::{ClassSpec, Population, SupplyTimeProfile};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Non-negative, non-increasing vector with a few exact zeros.
pub fn random_profile(rng: &mut ChaCha8Rng, t: usize, max: f64) -> Vec<f64> {
    sorted_desc(
        (0..t)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.0..max)
                }
            })
            .collect(),
    )
}

pub fn random_population(rng: &mut ChaCha8Rng, t: usize, max_classes: usize) -> Population {
    let k = rng.gen_range(1..=max_classes);
    let specs = (0..k)
        .map(|_| {
            let power = if rng.gen_bool(0.1) {
                0.0
            } else {
                rng.gen_range(0.1..3.0)
            };
            ClassSpec::new(rng.gen_range(0.05..1.0), power, rng.gen_range(1..=t))
        })
        .collect();
    Population::normalized(t, specs).unwrap()
}

/// Scales a random supply until every tail of `d` fits, then shuffles it into
/// time order. With `tight` the binding tail is met with equality.
pub fn adequate_supply(rng: &mut ChaCha8Rng, d: &[f64], tight: bool) -> SupplyTimeProfile {
    let t = d.len();
    let dt = tails(d);
    loop {
        let p = random_profile(rng, t, 3.0);
        let pt = tails(&p);
        let mut factor: f64 = 0.0;
        let mut ok = true;
        for s in 0..t {
            if dt[s] > 0.0 {
                if pt[s] <= 0.0 {
                    ok = false;
                    break;
                }
                factor = factor.max(dt[s] / pt[s]);
            }
        }
        if !ok {
            continue;
        }
        if factor == 0.0 {
            factor = 1.0;
        }
        let slack = if tight {
            1.0
        } else {
            1.0 + rng.gen_range(0.0..0.5)
        };
        let mut q: Vec<f64> = p.iter().map(|x| x * factor * slack).collect();
        q.shuffle(rng);
        return SupplyTimeProfile::new(q).unwrap();
    }
}

pub fn tails(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for i in (0..v.len()).rev() {
        acc += v[i];
        out[i] = acc;
    }
    out
}

pub fn random_utility(rng: &mut ChaCha8Rng, t: usize, grid: &ContractGrid) -> UtilitySpec {
    match rng.gen_range(0..4) {
        0 | 1 => UtilitySpec::power_law(
            rng.gen_range(0.5..3.0),
            rng.gen_range(0.3..1.5),
            rng.gen_range(0.5..1.5),
        ),
        2 => UtilitySpec::Indicator {
            min_power: *grid.powers()[1..].choose(rng).unwrap(),
            min_duration: rng.gen_range(1..=t),
            value: rng.gen_range(0.5..2.0),
        },
        _ => {
            let powers: Vec<f64> = grid.powers()[1..].to_vec();
            let mut level = 0.0;
            let values = powers
                .iter()
                .map(|_| {
                    level += rng.gen_range(0.0..1.0);
                    let mut row = Vec::with_capacity(t);
                    let mut v = level;
                    for _ in 0..t {
                        row.push(v);
                        v += rng.gen_range(0.0..1.0);
                    }
                    row
                })
                .collect();
            UtilitySpec::Table { powers, values }
        }
    }
}

pub fn random_grid(rng: &mut ChaCha8Rng, t: usize, max_levels: usize) -> ContractGrid {
    let mut levels: Vec<f64> = (1..=12).map(|i| i as f64 * 0.25).collect();
    levels.shuffle(rng);
    let mut chosen = levels[..rng.gen_range(1..=max_levels)].to_vec();
    chosen.sort_by(f64::total_cmp);
    ContractGrid::new(chosen, t).unwrap()
}

/// Contracts in welfare order: per class, the null contract then every
/// `(power, duration)` with positive power.
pub fn contract_columns(classes: usize, grid: &ContractGrid) -> Vec<(usize, f64, usize)> {
    let mut cols = Vec::new();
    for c in 0..classes {
        cols.push((c, 0.0, 1));
        for &l in &grid.powers()[1..] {
            for h in 1..=grid.horizon() {
                cols.push((c, l, h));
            }
        }
    }
    cols
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot_row = a[col].clone();
        for r in 0..n {
            if r != col {
                let f = a[r][col] / pivot_row[col];
                if f != 0.0 {
                    for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                        *x -= f * p;
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Best welfare over every basic feasible mixture, found by trying each
/// square sub-system of the mass and tail-energy equations with slacks.
pub fn vertex_enumeration_welfare<U: ServiceUtility>(
    masses: &[f64],
    p_sorted: &[f64],
    grid: &ContractGrid,
    utilities: &[U],
) -> f64 {
    let t = grid.horizon();
    let cols = contract_columns(masses.len(), grid);
    let rows = masses.len() + t;
    let n = cols.len() + t;
    let s = tails(p_sorted);
    let column = |j: usize| -> Vec<f64> {
        let mut v = vec![0.0; rows];
        if j < cols.len() {
            let (c, l, h) = cols[j];
            v[c] = 1.0;
            for tt in 1..=t {
                v[masses.len() + tt - 1] = l * (h + 1).saturating_sub(tt) as f64;
            }
        } else {
            v[masses.len() + j - cols.len()] = 1.0;
        }
        v
    };
    let all: Vec<Vec<f64>> = (0..n).map(column).collect();
    let value = |j: usize| -> f64 {
        if j < cols.len() {
            let (c, l, h) = cols[j];
            utilities[c].value(l, h)
        } else {
            0.0
        }
    };
    let rhs: Vec<f64> = masses.iter().copied().chain(s.iter().copied()).collect();
    let mut best = f64::NEG_INFINITY;
    combinations(n, rows, |basis| {
        let a: Vec<Vec<f64>> = (0..rows)
            .map(|r| basis.iter().map(|&j| all[j][r]).collect())
            .collect();
        if let Some(x) = solve_square(a, rhs.clone()) {
            if x.iter().all(|&v| v >= -1e-9) {
                let w: f64 = basis.iter().zip(&x).map(|(&j, &v)| v * value(j)).sum();
                best = best.max(w);
            }
        }
    });
    best
}

/// Single-class lattice search: masses in multiples of `1/m` over at most
/// `pieces` contracts. Returns the best feasible welfare.
pub fn lattice_welfare<U: ServiceUtility>(
    p_sorted: &[f64],
    grid: &ContractGrid,
    utility: &U,
    pieces: usize,
    m: usize,
) -> f64 {
    let cols = contract_columns(1, grid);
    let s = tails(p_sorted);
    let t = grid.horizon();
    let mut best: f64 = 0.0;
    combinations(cols.len(), pieces.min(cols.len()), |chosen| {
        // Compositions of m into chosen.len() parts.
        let k = chosen.len();
        let mut parts = vec![0usize; k];
        fn rec(i: usize, left: usize, parts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            if i + 1 == parts.len() {
                parts[i] = left;
                f(parts);
                return;
            }
            for v in 0..=left {
                parts[i] = v;
                rec(i + 1, left - v, parts, f);
            }
        }
        rec(0, m, &mut parts, &mut |parts: &[usize]| {
            let mut z = vec![0.0; t];
            let mut w = 0.0;
            for (&j, &q) in chosen.iter().zip(parts) {
                let (_, l, h) = cols[j];
                let mass = q as f64 / m as f64;
                w += mass * utility.value(l, h);
                for tt in 1..=t {
                    z[tt - 1] += mass * l * (h + 1).saturating_sub(tt) as f64;
                }
            }
            if z.iter().zip(&s).all(|(a, b)| *a <= b + 1e-12) {
                best = best.max(w);
            }
        });
    });
    best
}
