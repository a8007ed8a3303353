//! Avoid-box samplers.

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::hull::{hull_decompose, P2};
use super::RelabelConfig;
use crate::envs::maze::MazeLayout;
use crate::error::{check_dim, CoreError, Result};
use crate::seed::Rng;
use crate::traj::{AvoidBox, StateVec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Restricted,
    Contour,
    DiscreteTopK,
}

/// Which sampler actually produced a box list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerUsed {
    Uniform,
    Restricted,
    Contour,
    /// Contour sampling found no nook and fell back to uniform sampling.
    ContourFallback,
    Discrete,
}

impl SamplerUsed {
    pub fn name(self) -> &'static str {
        match self {
            SamplerUsed::Uniform => "uniform",
            SamplerUsed::Restricted => "restricted",
            SamplerUsed::Contour => "contour",
            SamplerUsed::ContourFallback => "contour_fallback_uniform",
            SamplerUsed::Discrete => "discrete_top_k",
        }
    }
}

/// Admissible centroid locations for the restricted sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Free cells of a maze layout, read on two state dimensions.
    Maze { layout: Vec<String>, dims: [usize; 2] },
    /// An axis-aligned box (inclusive).
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

impl Region {
    pub fn validate(&self, d_s: usize) -> Result<()> {
        match self {
            Region::Maze { layout, dims } => {
                MazeLayout::parse(layout)?;
                if dims.iter().any(|&d| d >= d_s) {
                    return Err(CoreError::arg(format!("region dims out of range for d_s={d_s}")));
                }
            }
            Region::Box { lower, upper } => {
                check_dim(d_s, lower.len())?;
                AvoidBox::new(lower.clone(), upper.clone())?;
            }
        }
        Ok(())
    }
}

enum CompiledRegion {
    Maze(MazeLayout, [usize; 2]),
    Box(AvoidBox),
}

impl CompiledRegion {
    fn new(r: &Region) -> Result<Self> {
        Ok(match r {
            Region::Maze { layout, dims } => CompiledRegion::Maze(MazeLayout::parse(layout)?, *dims),
            Region::Box { lower, upper } => CompiledRegion::Box(AvoidBox::new(lower.clone(), upper.clone())?),
        })
    }

    fn contains(&self, c: &[f64]) -> bool {
        match self {
            CompiledRegion::Maze(m, [a, b]) => !m.is_wall(c[*a], c[*b]),
            CompiledRegion::Box(b) => b.contains_unchecked(c),
        }
    }
}

fn uniform_centroid(bounds: &[(f64, f64)], rng: &mut Rng) -> Vec<f64> {
    bounds.iter().map(|&(lo, hi)| if lo < hi { rng.random_range(lo..=hi) } else { lo }).collect()
}

/// Box of side `width` around `centroid` on `box_dims`; full state range elsewhere.
fn make_box(centroid: &[f64], width: f64, bounds: &[(f64, f64)], box_dims: Option<&[usize]>) -> AvoidBox {
    let half = width / 2.0;
    let (mut lower, mut upper): (Vec<f64>, Vec<f64>) = centroid.iter().map(|c| (c - half, c + half)).unzip();
    if let Some(dims) = box_dims {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !dims.contains(&i) {
                lower[i] = lo;
                upper[i] = hi;
            }
        }
    }
    AvoidBox { lower, upper }
}

fn draw_width(cfg: &RelabelConfig, rng: &mut Rng) -> f64 {
    if cfg.w_max > 0.0 {
        rng.random_range(0.0..=cfg.w_max)
    } else {
        0.0
    }
}

/// `n_avoid` boxes with centroids uniform in `bounds` and widths uniform in `[0, w_max]`.
pub fn sample_boxes_uniform(bounds: &[(f64, f64)], cfg: &RelabelConfig, rng: &mut Rng) -> Vec<AvoidBox> {
    (0..cfg.n_avoid)
        .map(|_| {
            let c = uniform_centroid(bounds, rng);
            let w = draw_width(cfg, rng);
            make_box(&c, w, bounds, cfg.box_dims.as_deref())
        })
        .collect()
}

fn sample_restricted(
    region: &CompiledRegion,
    bounds: &[(f64, f64)],
    cfg: &RelabelConfig,
    rng: &mut Rng,
) -> Result<Vec<AvoidBox>> {
    (0..cfg.n_avoid)
        .map(|_| {
            for _ in 0..cfg.max_resample_attempts {
                let c = uniform_centroid(bounds, rng);
                if region.contains(&c) {
                    let w = draw_width(cfg, rng);
                    return Ok(make_box(&c, w, bounds, cfg.box_dims.as_deref()));
                }
            }
            Err(CoreError::Sampler(format!(
                "no centroid inside the restricted region after {} draws",
                cfg.max_resample_attempts
            )))
        })
        .collect()
}

/// Uniform sampling with centroids redrawn until they fall inside `region`.
pub fn sample_boxes_restricted(
    region: &Region,
    bounds: &[(f64, f64)],
    cfg: &RelabelConfig,
    rng: &mut Rng,
) -> Result<Vec<AvoidBox>> {
    sample_restricted(&CompiledRegion::new(region)?, bounds, cfg, rng)
}

/// A centroid in a nook of the trajectory's contour: a point on the segment
/// between the nook's two border points, drawn from the middle half of that
/// segment so the border points themselves are kept at a distance.
pub fn contour_sample_centroid(points: &[P2], rng: &mut Rng) -> Option<P2> {
    let d = hull_decompose(points);
    if d.nooks.is_empty() {
        return None;
    }
    let nook = &d.nooks[rng.random_range(0..d.nooks.len())];
    let t = rng.random_range(0.25..=0.75);
    let (a, b) = (nook.border_a, nook.border_b);
    Some([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
}

/// The `top_k` most frequent distinct states; ties broken by lexicographic state order.
pub fn discrete_pool(dataset: &[Trajectory], top_k: usize) -> Result<Vec<StateVec>> {
    let mut counts: HashMap<Vec<u64>, (usize, &StateVec)> = HashMap::new();
    for t in dataset {
        for s in t.states() {
            counts.entry(s.iter().map(|v| v.to_bits()).collect()).or_insert((0, s)).0 += 1;
        }
    }
    if counts.is_empty() {
        return Err(CoreError::arg("the discrete sampler needs a non-empty dataset"));
    }
    if top_k > counts.len() {
        return Err(CoreError::arg(format!(
            "top_k={top_k} exceeds the {} distinct states in the dataset",
            counts.len()
        )));
    }
    let mut ranked: Vec<(usize, &StateVec)> = counts.into_values().collect();
    ranked.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| {
            a.1.iter().zip(b.1.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(ranked.into_iter().take(top_k).map(|(_, s)| s.clone()).collect())
}

/// Centroids drawn uniformly from `pool`; each box is the centroid +- epsilon.
pub fn sample_boxes_discrete(pool: &[StateVec], cfg: &RelabelConfig, rng: &mut Rng) -> Vec<AvoidBox> {
    (0..cfg.n_avoid)
        .map(|_| {
            let c = &pool[rng.random_range(0..pool.len())];
            make_box(c, 2.0 * cfg.epsilon, &[], None)
        })
        .collect()
}

/// Sampler state shared by both relabeling passes.
pub struct Relabeler {
    cfg: RelabelConfig,
    bounds: Vec<(f64, f64)>,
    region: Option<CompiledRegion>,
    pool: Vec<StateVec>,
}

impl Relabeler {
    /// `bounds` is the state space; `dataset` feeds the discrete frequency ranking.
    pub fn new(cfg: RelabelConfig, bounds: Vec<(f64, f64)>, dataset: &[Trajectory]) -> Result<Self> {
        cfg.validate(bounds.len())?;
        if let Some(t) = dataset.first() {
            check_dim(bounds.len(), t.state_dim())?;
        }
        let region = cfg.restricted_region.as_ref().map(CompiledRegion::new).transpose()?;
        let pool = if cfg.sampler == SamplerKind::DiscreteTopK { discrete_pool(dataset, cfg.top_k)? } else { Vec::new() };
        Ok(Relabeler { cfg, bounds, region, pool })
    }

    pub fn config(&self) -> &RelabelConfig {
        &self.cfg
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// The discrete sampler's candidate states (empty for other samplers).
    pub fn pool(&self) -> &[StateVec] {
        &self.pool
    }

    pub fn sample(&self, traj: &Trajectory, rng: &mut Rng) -> Result<(Vec<AvoidBox>, SamplerUsed)> {
        let cfg = &self.cfg;
        match cfg.sampler {
            SamplerKind::Uniform => Ok((sample_boxes_uniform(&self.bounds, cfg, rng), SamplerUsed::Uniform)),
            SamplerKind::Restricted => {
                let region = self.region.as_ref().expect("validated");
                Ok((sample_restricted(region, &self.bounds, cfg, rng)?, SamplerUsed::Restricted))
            }
            SamplerKind::DiscreteTopK => Ok((sample_boxes_discrete(&self.pool, cfg, rng), SamplerUsed::Discrete)),
            SamplerKind::Contour => {
                let [i, j] = cfg.contour_dims;
                let pts: Vec<P2> = traj.states().iter().map(|s| [s[i], s[j]]).collect();
                let mut boxes = Vec::with_capacity(cfg.n_avoid);
                for _ in 0..cfg.n_avoid {
                    let Some(c2) = contour_sample_centroid(&pts, rng) else {
                        return Ok((sample_boxes_uniform(&self.bounds, cfg, rng), SamplerUsed::ContourFallback));
                    };
                    // Remaining dimensions: uniform over the trajectory's own range.
                    let mut c: Vec<f64> = (0..self.bounds.len())
                        .map(|d| {
                            let (lo, hi) = traj.states().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                                (lo.min(s[d]), hi.max(s[d]))
                            });
                            if lo < hi {
                                rng.random_range(lo..=hi)
                            } else {
                                lo
                            }
                        })
                        .collect();
                    c[i] = c2[0];
                    c[j] = c2[1];
                    let w = draw_width(cfg, rng);
                    boxes.push(make_box(&c, w, &self.bounds, cfg.box_dims.as_deref()));
                }
                Ok((boxes, SamplerUsed::Contour))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use crate::traj::{ActionVec, EpisodeMeta};

    fn traj_of(states: &[Vec<f64>]) -> Trajectory {
        Trajectory::new(
            states.iter().cloned().map(StateVec).collect(),
            states.iter().map(|_| ActionVec(vec![0.0])).collect(),
            EpisodeMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_width_boxes_are_degenerate() {
        let cfg = RelabelConfig { w_max: 0.0, n_avoid: 3, ..Default::default() };
        let boxes = sample_boxes_uniform(&[(0.0, 1.0); 2], &cfg, &mut rng_from(0));
        assert_eq!(boxes.len(), 3);
        assert!(boxes.iter().all(|b| b.lower == b.upper));
    }

    #[test]
    fn box_dims_span_other_dimensions() {
        let cfg = RelabelConfig { w_max: 0.4, box_dims: Some(vec![0, 1]), ..Default::default() };
        let bounds = [(0.0, 5.0), (0.0, 5.0), (-2.0, 2.0), (-2.0, 2.0)];
        for b in sample_boxes_uniform(&bounds, &cfg, &mut rng_from(1)) {
            assert_eq!((b.lower[2], b.upper[2]), (-2.0, 2.0));
            assert!(b.widths()[0] <= 0.4);
        }
    }

    #[test]
    fn restricted_sampler_fails_on_empty_region() {
        let region = Region::Box { lower: vec![5.0, 5.0], upper: vec![6.0, 6.0] };
        let cfg = RelabelConfig {
            sampler: SamplerKind::Restricted,
            restricted_region: Some(region.clone()),
            max_resample_attempts: 100,
            ..Default::default()
        };
        let r = sample_boxes_restricted(&region, &[(0.0, 1.0); 2], &cfg, &mut rng_from(0));
        assert!(matches!(r, Err(CoreError::Sampler(_))));
    }

    #[test]
    fn discrete_pool_single_state_and_ties() {
        let t = traj_of(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        let pool = discrete_pool(std::slice::from_ref(&t), 1).unwrap();
        assert_eq!(pool, vec![StateVec(vec![1.0, 0.0])]);
        let cfg = RelabelConfig { sampler: SamplerKind::DiscreteTopK, ..Default::default() };
        let b = &sample_boxes_discrete(&pool, &cfg, &mut rng_from(0))[0];
        assert!((b.lower[0] - 0.999).abs() < 1e-12 && (b.upper[1] - 0.001).abs() < 1e-12);

        // 11 and 01 both appear twice; 00 once. Lexicographic order puts 01 first.
        let t = traj_of(&[vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let pool = discrete_pool(&[t.clone()], 1).unwrap();
        assert_eq!(pool, vec![StateVec(vec![0.0, 1.0])]);
        assert!(discrete_pool(&[t], 4).is_err());
        assert!(discrete_pool(&[], 1).is_err());
    }
}
