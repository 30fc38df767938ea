//! Region fusion solver for the l0 gradient proximal problem
//!
//! ```text
//! min_v  lambda_eff * ||grad v||_0 + ||v - target||_2^2
//! ```
//!
//! Every pixel starts as its own region. Neighbouring regions `i`, `j` with
//! means `Y_i`, `Y_j`, pixel counts `w_i`, `w_j` and `c_ij` adjacent pixel
//! pairs across their shared boundary are fused when
//!
//! ```text
//! w_i * w_j * ||Y_i - Y_j||^2 <= lambda * c_ij * (w_i + w_j)
//! ```
//!
//! which is exactly the condition that replacing the two means by the pooled
//! mean costs no more fidelity than the `lambda * c_ij` saved on the penalty.
//! The working `lambda` is ramped linearly up to `lambda_eff`, so every
//! accepted fusion is also non-increasing for the objective at `lambda_eff`.
//!
//! The penalty here counts adjacent pixel pairs with differing values
//! ([`boundary_count`]); see [`prox_objective`].

use crate::error::{Error, Result};
use crate::image::{boundary_count, squared_distance, ImageTensor, DEFAULT_L0_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Penalty weight of the proximal problem (`2 * lambda / beta` inside ADMM).
    pub lambda_eff: f64,
    /// Number of sweeps over which the working penalty ramps up to `lambda_eff`.
    pub ramp_steps: usize,
    /// Difference below which two samples count as equal when scoring output.
    pub epsilon: f64,
    /// Sweeps allowed at full penalty after the ramp while fusions still occur.
    pub max_extra_passes: usize,
}

impl FusionConfig {
    pub const DEFAULT_RAMP_STEPS: usize = 100;
    pub const DEFAULT_MAX_EXTRA_PASSES: usize = 100;

    pub fn new(lambda_eff: f64) -> Self {
        Self {
            lambda_eff,
            ramp_steps: Self::DEFAULT_RAMP_STEPS,
            epsilon: DEFAULT_L0_EPSILON,
            max_extra_passes: Self::DEFAULT_MAX_EXTRA_PASSES,
        }
    }

    pub fn with_ramp_steps(mut self, ramp_steps: usize) -> Self {
        self.ramp_steps = ramp_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda_eff.is_finite() || self.lambda_eff < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_eff must be finite and non-negative, got {}",
                self.lambda_eff
            )));
        }
        if self.ramp_steps == 0 {
            return Err(Error::InvalidArgument(
                "ramp_steps must be at least 1".into(),
            ));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(
                "epsilon must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Group {
    pixel_count: usize,
    alive: bool,
    /// Sorted by neighbour id; weights are the number of adjacent pixel pairs.
    links: Vec<(usize, u32)>,
}

/// Partition state of a region fusion solve. A group is identified by the
/// smallest pixel index it contains.
#[derive(Debug, Clone)]
pub struct RegionGraph {
    height: usize,
    width: usize,
    channels: usize,
    groups: Vec<Group>,
    /// Per-group channel means, `channels` entries per group.
    values: Vec<f64>,
    parent: Vec<usize>,
    live: usize,
}

/// One pixel per group, one unit link per 4-adjacent pixel pair.
pub fn init_graph(target: &ImageTensor) -> RegionGraph {
    let (h, w, ch) = target.shape();
    let n = h * w;
    let mut groups: Vec<Group> = (0..n)
        .map(|_| Group {
            pixel_count: 1,
            alive: true,
            links: Vec::with_capacity(4),
        })
        .collect();
    // Neighbours are pushed in ascending id order: up, left, right, down.
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let links = &mut groups[p].links;
            if y > 0 {
                links.push((p - w, 1));
            }
            if x > 0 {
                links.push((p - 1, 1));
            }
            if x + 1 < w {
                links.push((p + 1, 1));
            }
            if y + 1 < h {
                links.push((p + w, 1));
            }
        }
    }
    let mut values = vec![0.0; n * ch];
    for p in 0..n {
        for c in 0..ch {
            values[p * ch + c] = target.data()[c * n + p];
        }
    }
    RegionGraph {
        height: h,
        width: w,
        channels: ch,
        groups,
        values,
        parent: (0..n).collect(),
        live: n,
    }
}

impl RegionGraph {
    pub fn live_groups(&self) -> usize {
        self.live
    }

    pub fn is_alive(&self, group: usize) -> bool {
        self.groups.get(group).is_some_and(|g| g.alive)
    }

    pub fn pixel_count(&self, group: usize) -> usize {
        self.groups[group].pixel_count
    }

    pub fn value(&self, group: usize) -> &[f64] {
        &self.values[group * self.channels..(group + 1) * self.channels]
    }

    pub fn links(&self, group: usize) -> &[(usize, u32)] {
        &self.groups[group].links
    }

    pub fn link_weight(&self, i: usize, j: usize) -> Option<u32> {
        let links = &self.groups.get(i)?.links;
        links
            .binary_search_by_key(&j, |&(k, _)| k)
            .ok()
            .map(|pos| links[pos].1)
    }

    /// Total number of links (each unordered pair counted once).
    pub fn link_count(&self) -> usize {
        self.groups
            .iter()
            .filter(|g| g.alive)
            .map(|g| g.links.len())
            .sum::<usize>()
            / 2
    }

    /// Sum of connection weights over all links.
    pub fn total_link_weight(&self) -> u64 {
        self.groups
            .iter()
            .filter(|g| g.alive)
            .flat_map(|g| g.links.iter().map(|&(_, c)| c as u64))
            .sum::<u64>()
            / 2
    }

    /// Group that currently owns pixel `p`.
    pub fn find(&mut self, p: usize) -> usize {
        let mut root = p;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = p;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Fuses `i` and `j` when the fusion criterion holds at `lambda`.
    /// The survivor keeps the smaller id. Returns whether a fusion happened.
    pub fn try_fuse(&mut self, i: usize, j: usize, lambda: f64) -> Result<bool> {
        if i == j || !self.is_alive(i) || !self.is_alive(j) {
            return Err(Error::Graph(format!(
                "groups {i} and {j} are not two live groups"
            )));
        }
        let c = self
            .link_weight(i, j)
            .ok_or_else(|| Error::Graph(format!("groups {i} and {j} are not adjacent")))?;
        let wi = self.groups[i].pixel_count as f64;
        let wj = self.groups[j].pixel_count as f64;
        let dist2: f64 = self
            .value(i)
            .iter()
            .zip(self.value(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if wi * wj * dist2 <= lambda * c as f64 * (wi + wj) {
            self.fuse(i, j, dist2 == 0.0);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn fuse(&mut self, i: usize, j: usize, equal_values: bool) {
        let (keep, gone) = if i < j { (i, j) } else { (j, i) };
        let ch = self.channels;
        if !equal_values {
            let wk = self.groups[keep].pixel_count as f64;
            let wg = self.groups[gone].pixel_count as f64;
            for c in 0..ch {
                let yk = self.values[keep * ch + c];
                let yg = self.values[gone * ch + c];
                self.values[keep * ch + c] = (wk * yk + wg * yg) / (wk + wg);
            }
        }
        self.groups[keep].pixel_count += self.groups[gone].pixel_count;

        let gone_links = std::mem::take(&mut self.groups[gone].links);
        let keep_links = std::mem::take(&mut self.groups[keep].links);
        let mut merged = Vec::with_capacity(keep_links.len() + gone_links.len());
        let (mut a, mut b) = (0, 0);
        while a < keep_links.len() || b < gone_links.len() {
            let next = match (keep_links.get(a), gone_links.get(b)) {
                (Some(&(ka, ca)), Some(&(kb, cb))) => {
                    if ka < kb {
                        a += 1;
                        (ka, ca)
                    } else if kb < ka {
                        b += 1;
                        (kb, cb)
                    } else {
                        a += 1;
                        b += 1;
                        (ka, ca + cb)
                    }
                }
                (Some(&l), None) => {
                    a += 1;
                    l
                }
                (None, Some(&l)) => {
                    b += 1;
                    l
                }
                (None, None) => unreachable!(),
            };
            if next.0 != keep && next.0 != gone {
                merged.push(next);
            }
        }
        self.groups[keep].links = merged;

        // Re-point the dead group's neighbours at the survivor.
        for &(k, c) in &gone_links {
            if k == keep {
                continue;
            }
            let links = &mut self.groups[k].links;
            if let Ok(pos) = links.binary_search_by_key(&gone, |&(n, _)| n) {
                links.remove(pos);
            }
            match links.binary_search_by_key(&keep, |&(n, _)| n) {
                Ok(pos) => links[pos].1 += c,
                Err(pos) => links.insert(pos, (keep, c)),
            }
        }

        self.groups[gone].alive = false;
        self.parent[gone] = keep;
        self.live -= 1;
    }

    /// One sweep over live groups in ascending id order at a fixed penalty.
    /// Returns the number of fusions performed.
    pub fn sweep(&mut self, lambda: f64) -> usize {
        let mut fusions = 0;
        for i in 0..self.groups.len() {
            let mut idx = 0;
            while self.groups[i].alive && idx < self.groups[i].links.len() {
                let j = self.groups[i].links[idx].0;
                match self.try_fuse(i, j, lambda) {
                    Ok(true) => {
                        fusions += 1;
                        // The merged group has a new mean and new neighbours.
                        idx = 0;
                    }
                    _ => idx += 1,
                }
            }
        }
        fusions
    }

    /// Paints each pixel with its group's value.
    pub fn render(&mut self) -> ImageTensor {
        let n = self.height * self.width;
        let ch = self.channels;
        let mut data = vec![0.0; n * ch];
        for p in 0..n {
            let g = self.find(p);
            for c in 0..ch {
                data[c * n + p] = self.values[g * ch + c];
            }
        }
        ImageTensor::new(self.height, self.width, ch, data)
            .expect("group means of finite samples are finite")
    }

    /// Recomputes every structural invariant from scratch against the
    /// image the graph was built from. Intended for tests.
    pub fn check_invariants(&mut self, target: &ImageTensor) -> Result<()> {
        let (h, w, ch) = target.shape();
        let n = h * w;
        let total: usize = self
            .groups
            .iter()
            .filter(|g| g.alive)
            .map(|g| g.pixel_count)
            .sum();
        if total != n {
            return Err(Error::Graph(format!(
                "live pixel counts sum to {total}, expected {n}"
            )));
        }
        let owner: Vec<usize> = (0..n).map(|p| self.find(p)).collect();
        let mut sums = vec![0.0; n * ch];
        let mut counts = vec![0usize; n];
        for p in 0..n {
            counts[owner[p]] += 1;
            for c in 0..ch {
                sums[owner[p] * ch + c] += target.data()[c * n + p];
            }
        }
        let mut crossing = std::collections::BTreeMap::<(usize, usize), u32>::new();
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for q in [(x + 1 < w).then(|| p + 1), (y + 1 < h).then(|| p + w)]
                    .into_iter()
                    .flatten()
                {
                    let (a, b) = (owner[p], owner[q]);
                    if a != b {
                        *crossing.entry((a.min(b), a.max(b))).or_default() += 1;
                    }
                }
            }
        }
        for (g, group) in self.groups.iter().enumerate() {
            if !group.alive {
                if !group.links.is_empty() {
                    return Err(Error::Graph(format!("dead group {g} keeps links")));
                }
                continue;
            }
            if owner[g] != g || counts[g] != group.pixel_count {
                return Err(Error::Graph(format!("group {g} ownership mismatch")));
            }
            for c in 0..ch {
                let mean = sums[g * ch + c] / counts[g] as f64;
                if (mean - self.values[g * ch + c]).abs() > 1e-9 {
                    return Err(Error::Graph(format!("group {g} value is not its mean")));
                }
            }
            if !group.links.windows(2).all(|p| p[0].0 < p[1].0) {
                return Err(Error::Graph(format!("group {g} links unsorted")));
            }
            for &(k, c) in &group.links {
                let expected = crossing.get(&(g.min(k), g.max(k))).copied().unwrap_or(0);
                if k == g || c == 0 || c != expected {
                    return Err(Error::Graph(format!(
                        "link {g}-{k} has weight {c}, boundary has {expected}"
                    )));
                }
                if self.link_weight(k, g) != Some(c) {
                    return Err(Error::Graph(format!("link {g}-{k} not symmetric")));
                }
            }
        }
        let link_total: u64 = crossing.values().map(|&c| c as u64).sum();
        if link_total != self.total_link_weight() {
            return Err(Error::Graph(
                "link weights do not cover the boundary".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionStats {
    pub passes: usize,
    pub fusions: usize,
    pub regions: usize,
}

/// Approximately solves the l0 gradient proximal problem at `cfg.lambda_eff`.
/// The target is not clamped; values outside `[0, 1]` are fine.
pub fn solve_prox(target: &ImageTensor, cfg: &FusionConfig) -> Result<ImageTensor> {
    solve_prox_with_stats(target, cfg).map(|(v, _)| v)
}

pub fn solve_prox_with_stats(
    target: &ImageTensor,
    cfg: &FusionConfig,
) -> Result<(ImageTensor, FusionStats)> {
    cfg.validate()?;
    let mut graph = init_graph(target);
    let mut fusions = 0;
    let mut passes = 0;
    let mut last = 0;
    for step in 1..=cfg.ramp_steps {
        let lambda = cfg.lambda_eff * (step as f64 / cfg.ramp_steps as f64);
        last = graph.sweep(lambda);
        fusions += last;
        passes += 1;
    }
    let mut extra = 0;
    while last > 0 && extra < cfg.max_extra_passes {
        last = graph.sweep(cfg.lambda_eff);
        fusions += last;
        passes += 1;
        extra += 1;
    }
    let stats = FusionStats {
        passes,
        fusions,
        regions: graph.live_groups(),
    };
    Ok((graph.render(), stats))
}

/// `lambda_eff * boundary_count(v) + ||v - target||^2`, the objective region
/// fusion decreases.
pub fn prox_objective(
    v: &ImageTensor,
    target: &ImageTensor,
    lambda_eff: f64,
    epsilon: f64,
) -> Result<f64> {
    let fidelity = squared_distance(v, target)?;
    Ok(fidelity + lambda_eff * boundary_count(v, epsilon) as f64)
}
