#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uavmap::neuralnet::{loss, LabeledSample, ParamVector};
use uavmap::scenario::{load_config, ScenarioConfig};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn desk() -> ScenarioConfig {
    load_config(&scenario_path("desk.toml")).expect("desk scenario loads")
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabeledSample> {
    (0..n)
        .map(|_| LabeledSample::new([rng.random(), rng.random()], rng.random_range(0..2)).unwrap())
        .collect()
}

/// Central differences, one coordinate at a time.
pub fn finite_difference(theta: &ParamVector, batch: &[LabeledSample], h: f64) -> Vec<f64> {
    let base = theta.values().to_vec();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let lp = loss(&ParamVector::from_values(theta.arch().clone(), plus).unwrap(), batch).unwrap();
            let lm = loss(&ParamVector::from_values(theta.arch().clone(), minus).unwrap(), batch).unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

/// Smallest |pre-activation| over all hidden units and samples, computed
/// with a plain loop independent of the library's forward pass.
pub fn min_hidden_margin(theta: &ParamVector, batch: &[LabeledSample]) -> f64 {
    let sizes = theta.arch().layer_sizes();
    let v = theta.values();
    let mut margin = f64::INFINITY;
    for s in batch {
        let mut act = s.coord.to_vec();
        let mut off = 0;
        for k in 0..sizes.len() - 2 {
            let (n_in, n_out) = (sizes[k], sizes[k + 1]);
            let w = &v[off..off + n_in * n_out];
            let b = &v[off + n_in * n_out..off + n_in * n_out + n_out];
            act = (0..n_out)
                .map(|o| {
                    let z = b[o] + (0..n_in).map(|i| w[o * n_in + i] * act[i]).sum::<f64>();
                    margin = margin.min(z.abs());
                    z.max(0.0)
                })
                .collect();
            off += n_in * n_out + n_out;
        }
    }
    margin
}

/// Shortest path length through grid cells whose outage is at most `p0`,
/// 16-connected, from the cell containing `s` to the cell containing `g`.
/// Approximates the constrained optimum to within the grid resolution.
pub fn grid_optimum(
    map: &dyn uavmap::planner::OutageMap,
    bounds: &uavmap::Bounds,
    cell: f64,
    p0: f64,
    s: [f64; 2],
    g: [f64; 2],
) -> Option<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let nx = (bounds.width() / cell).ceil() as usize;
    let ny = (bounds.height() / cell).ceil() as usize;
    let index = |q: [f64; 2]| {
        let i = (((q[0] - bounds.x_min) / cell) as usize).min(nx - 1);
        let j = (((q[1] - bounds.y_min) / cell) as usize).min(ny - 1);
        j * nx + i
    };
    let mut free: Vec<bool> = (0..nx * ny)
        .map(|k| {
            let c = [
                bounds.x_min + ((k % nx) as f64 + 0.5) * cell,
                bounds.y_min + ((k / nx) as f64 + 0.5) * cell,
            ];
            map.outage(c).is_some_and(|p| p <= p0)
        })
        .collect();
    let (src, dst) = (index(s), index(g));
    for q in [s, g] {
        if !map.outage(q).is_some_and(|p| p <= p0) {
            return None;
        }
        free[index(q)] = true;
    }
    const MOVES: [(i64, i64); 16] = [
        (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1),
        (2, 1), (1, 2), (-2, 1), (-1, 2), (2, -1), (1, -2), (-2, -1), (-1, -2),
    ];
    let mut dist = vec![f64::INFINITY; nx * ny];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    // non-negative f64 bit patterns sort like the values
    heap.push(Reverse((0f64.to_bits(), src)));
    while let Some(Reverse((bits, k))) = heap.pop() {
        let d = f64::from_bits(bits);
        if k == dst {
            return Some(d);
        }
        if d > dist[k] {
            continue;
        }
        let (i, j) = ((k % nx) as i64, (k / nx) as i64);
        for (di, dj) in MOVES {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                continue;
            }
            let n = b as usize * nx + a as usize;
            let nd = d + cell * ((di * di + dj * dj) as f64).sqrt();
            if free[n] && nd < dist[n] {
                dist[n] = nd;
                heap.push(Reverse((nd.to_bits(), n)));
            }
        }
    }
    None
}
