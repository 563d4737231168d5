//! Synthetic labeled scenes and query workloads.
//!
//! Scenes are deterministic in (spec, seed): textured rectangular objects
//! move over a static background, and every frame's exact boxes come back
//! as ground truth. Workload generation mirrors the benchmark patterns:
//! uniform, prefix-restricted, and start-skewed (zipfian) temporal
//! distributions over single-label queries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, FrameDims, Rect};
use crate::query::{LabelPredicate, QuerySpec};
use crate::y8::FrameSeq;

/// Object motion. Linear trajectories bounce off frame edges so objects
/// stay fully in frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    Static { x: u32, y: u32 },
    Linear { x0: f64, y0: f64, dx: f64, dy: f64 },
}

/// One synthetic object: a textured `w x h` rectangle following a
/// trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub label: String,
    pub width: u32,
    pub height: u32,
    pub trajectory: Trajectory,
    pub texture_seed: u64,
}

/// Object coverage class: sparse below 20% average frame coverage, dense
/// at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityClass {
    Sparse,
    Dense,
}

pub const DENSITY_SPLIT: f64 = 0.20;

/// A synthetic scene description.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub dims: FrameDims,
    pub length: u32,
    pub objects: Vec<ObjectSpec>,
    pub density: DensityClass,
    /// When set, realized average coverage must land within two
    /// percentage points.
    pub target_coverage: Option<f64>,
}

fn bounce(pos: f64, vel: f64, t: f64, limit: f64) -> f64 {
    if limit <= 0.0 {
        return 0.0;
    }
    // Reflect position into [0, limit] with period 2*limit.
    let raw = pos + vel * t;
    let m = raw.rem_euclid(2.0 * limit);
    if m <= limit {
        m
    } else {
        2.0 * limit - m
    }
}

fn object_rect(obj: &ObjectSpec, frame: u32, dims: FrameDims) -> Rect {
    let (x, y) = match obj.trajectory {
        Trajectory::Static { x, y } => (x as f64, y as f64),
        Trajectory::Linear { x0, y0, dx, dy } => {
            let t = frame as f64;
            (
                bounce(x0, dx, t, (dims.width - obj.width) as f64),
                bounce(y0, dy, t, (dims.height - obj.height) as f64),
            )
        }
    };
    let x = (x.round() as u32).min(dims.width - obj.width);
    let y = (y.round() as u32).min(dims.height - obj.height);
    Rect::new(x, y, x + obj.width, y + obj.height)
}

/// Exact union area of a set of rects by x-coordinate slabs.
fn union_area(rects: &[Rect]) -> u64 {
    let mut xs: Vec<u32> = rects.iter().flat_map(|r| [r.x1, r.x2]).collect();
    xs.sort_unstable();
    xs.dedup();
    let mut total = 0u64;
    for w in xs.windows(2) {
        let (x1, x2) = (w[0], w[1]);
        let mut ys: Vec<(u32, u32)> = rects
            .iter()
            .filter(|r| r.x1 <= x1 && x2 <= r.x2)
            .map(|r| (r.y1, r.y2))
            .collect();
        ys.sort_unstable();
        let mut covered = 0u64;
        let mut cur: Option<(u32, u32)> = None;
        for (y1, y2) in ys {
            match cur {
                Some((_, ce)) if y1 <= ce => {
                    cur = Some((cur.unwrap().0, ce.max(y2)));
                }
                _ => {
                    if let Some((cs, ce)) = cur {
                        covered += (ce - cs) as u64;
                    }
                    cur = Some((y1, y2));
                }
            }
        }
        if let Some((cs, ce)) = cur {
            covered += (ce - cs) as u64;
        }
        total += covered * (x2 - x1) as u64;
    }
    total
}

/// Render a scene: frames plus exact per-frame ground-truth boxes.
///
/// Deterministic in (spec, seed). Errors when the realized average
/// coverage contradicts the declared density class or misses the numeric
/// target by more than two percentage points.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Result<(FrameSeq, Vec<BoundingBox>)> {
    if spec.length == 0 {
        return Err(Error::EmptyInput("scene length must be >= 1"));
    }
    for obj in &spec.objects {
        if obj.width == 0
            || obj.height == 0
            || obj.width > spec.dims.width
            || obj.height > spec.dims.height
        {
            return Err(Error::EmptyInput("object does not fit in frame"));
        }
    }
    let dims = spec.dims;
    let mut frames = FrameSeq::new(dims, spec.length);
    // Static, mildly structured background.
    let mut background = vec![0u8; dims.area() as usize];
    for y in 0..dims.height {
        for x in 0..dims.width {
            background[(y * dims.width + x) as usize] = 56 + ((x / 64 + y / 64) % 4) as u8 * 6;
        }
    }
    // Per-object texture, fixed across frames so motion produces deltas.
    let textures: Vec<Vec<u8>> = spec
        .objects
        .iter()
        .map(|obj| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ obj.texture_seed);
            (0..(obj.width * obj.height) as usize)
                .map(|_| 128 + (rng.random::<u8>() % 96))
                .collect()
        })
        .collect();

    let mut boxes = Vec::with_capacity(spec.objects.len() * spec.length as usize);
    let mut coverage_sum = 0.0;
    for f in 0..spec.length {
        let buf = frames.frame_mut(f);
        buf.copy_from_slice(&background);
        let mut rects = Vec::with_capacity(spec.objects.len());
        for (obj, tex) in spec.objects.iter().zip(&textures) {
            let r = object_rect(obj, f, dims);
            for row in 0..obj.height {
                let src = (row * obj.width) as usize;
                let dst = ((r.y1 + row) * dims.width + r.x1) as usize;
                buf[dst..dst + obj.width as usize]
                    .copy_from_slice(&tex[src..src + obj.width as usize]);
            }
            boxes.push(BoundingBox::new(f, &obj.label, r.x1, r.y1, r.x2, r.y2));
            rects.push(r);
        }
        coverage_sum += union_area(&rects) as f64 / dims.area() as f64;
    }
    let realized = coverage_sum / spec.length as f64;
    let class_ok = match spec.density {
        DensityClass::Sparse => realized < DENSITY_SPLIT,
        DensityClass::Dense => realized >= DENSITY_SPLIT,
    };
    if !class_ok {
        return Err(Error::InfeasibleDensity {
            target: if spec.density == DensityClass::Sparse {
                DENSITY_SPLIT
            } else {
                1.0
            },
            realized,
        });
    }
    if let Some(target) = spec.target_coverage {
        if (realized - target).abs() > 0.02 {
            return Err(Error::InfeasibleDensity { target, realized });
        }
    }
    Ok((frames, boxes))
}

/// Average fraction of frame area covered by boxes, per the scene's
/// ground truth.
pub fn realized_density(boxes: &[BoundingBox], dims: FrameDims, length: u32) -> f64 {
    let mut per_frame: Vec<Vec<Rect>> = vec![Vec::new(); length as usize];
    for b in boxes {
        per_frame[b.frame as usize].push(b.rect());
    }
    per_frame
        .iter()
        .map(|rs| union_area(rs) as f64 / dims.area() as f64)
        .sum::<f64>()
        / length as f64
}

/// Benchmark workload patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WorkloadPattern {
    W1,
    W2,
    W3,
    W4,
    W5,
    W6,
}

impl std::str::FromStr for WorkloadPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w1" => Ok(Self::W1),
            "w2" => Ok(Self::W2),
            "w3" => Ok(Self::W3),
            "w4" => Ok(Self::W4),
            "w5" => Ok(Self::W5),
            "w6" => Ok(Self::W6),
            _ => Err(Error::EmptyInput("unknown workload pattern (w1..w6)")),
        }
    }
}

/// How query start frames are distributed over the video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TemporalDist {
    Uniform,
    /// Starts confined to the leading fraction of the video.
    PrefixRestricted(f64),
    /// Start positions skewed toward the beginning with the given
    /// exponent.
    Zipfian(f64),
}

/// Per-query label choice.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelPattern {
    /// Weighted independent draw per query; weights must sum to 1.
    Weighted(Vec<(String, f64)>),
    /// The middle third of queries targets `mid`, the rest `rest`.
    MiddleThird { mid: String, rest: String },
}

/// A workload description: label and temporal distributions plus span.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub pattern: WorkloadPattern,
    pub video: String,
    pub video_len: u32,
    pub gop_len: u32,
    pub n_queries: usize,
    pub labels: LabelPattern,
    pub temporal: TemporalDist,
    /// Query span in frames; analog of a fixed-duration query.
    pub span: u32,
}

impl WorkloadSpec {
    /// The benchmark analog of each pattern, parameterized by the scene's
    /// labels. `labels[0]` is the primary object, `labels[1]` secondary,
    /// `labels[2]` the rare third.
    pub fn analog(
        pattern: WorkloadPattern,
        video: impl Into<String>,
        video_len: u32,
        gop_len: u32,
        labels: &[String],
    ) -> Result<Self> {
        let lab = |i: usize| -> Result<String> {
            labels
                .get(i)
                .cloned()
                .ok_or(Error::EmptyInput("workload needs more scene labels"))
        };
        let span = gop_len * 2;
        let spec = match pattern {
            WorkloadPattern::W1 => Self {
                pattern,
                video: video.into(),
                video_len,
                gop_len,
                n_queries: 100,
                labels: LabelPattern::Weighted(vec![(lab(0)?, 1.0)]),
                temporal: TemporalDist::Uniform,
                span,
            },
            WorkloadPattern::W2 => Self {
                pattern,
                video: video.into(),
                video_len,
                gop_len,
                n_queries: 100,
                labels: LabelPattern::Weighted(vec![(lab(0)?, 0.5), (lab(1)?, 0.5)]),
                temporal: TemporalDist::PrefixRestricted(0.25),
                span,
            },
            WorkloadPattern::W3 => Self {
                pattern,
                video: video.into(),
                video_len,
                gop_len,
                n_queries: 100,
                labels: LabelPattern::Weighted(vec![
                    (lab(0)?, 0.475),
                    (lab(1)?, 0.475),
                    (lab(2)?, 0.05),
                ]),
                temporal: TemporalDist::Zipfian(1.0),
                span,
            },
            WorkloadPattern::W4 => Self {
                pattern,
                video: video.into(),
                video_len,
                gop_len,
                n_queries: 200,
                labels: LabelPattern::MiddleThird {
                    mid: lab(1)?,
                    rest: lab(0)?,
                },
                temporal: TemporalDist::Zipfian(1.0),
                span,
            },
            WorkloadPattern::W5 => {
                let w = 1.0 / labels.len() as f64;
                Self {
                    pattern,
                    video: video.into(),
                    video_len,
                    gop_len,
                    n_queries: 200,
                    labels: LabelPattern::Weighted(
                        labels.iter().map(|l| (l.clone(), w)).collect(),
                    ),
                    temporal: TemporalDist::Uniform,
                    span: gop_len,
                }
            }
            WorkloadPattern::W6 => Self {
                pattern,
                video: video.into(),
                video_len,
                gop_len,
                n_queries: 200,
                labels: LabelPattern::Weighted(vec![(lab(0)?, 1.0)]),
                temporal: TemporalDist::Uniform,
                span: gop_len,
            },
        };
        Ok(spec)
    }
}

/// Generate the query list for a workload. Deterministic in (spec, seed).
/// Start frames are GOP-aligned; zipfian starts skew toward the video
/// start.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Vec<QuerySpec>> {
    if spec.video_len == 0 || spec.gop_len == 0 || spec.span == 0 {
        return Err(Error::EmptyInput("workload needs video_len, gop_len, span >= 1"));
    }
    if let LabelPattern::Weighted(w) = &spec.labels {
        let total: f64 = w.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::EmptyInput("label weights must sum to 1"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_gops = spec.video_len.div_ceil(spec.gop_len);
    let span_gops = spec.span.div_ceil(spec.gop_len).min(n_gops);
    let max_start_gop = n_gops - span_gops;

    let mut queries = Vec::with_capacity(spec.n_queries);
    for qi in 0..spec.n_queries {
        let start_gop = match spec.temporal {
            TemporalDist::Uniform => rng.random_range(0..=max_start_gop),
            TemporalDist::PrefixRestricted(frac) => {
                let hi = ((n_gops as f64 * frac).ceil() as u32)
                    .clamp(1, max_start_gop + 1);
                rng.random_range(0..hi)
            }
            TemporalDist::Zipfian(s) => {
                let z = Zipf::new((max_start_gop + 1) as f64, s).map_err(|e| {
                    Error::EmptyInput(match e {
                        _ => "bad zipf parameters",
                    })
                })?;
                (z.sample(&mut rng).floor() as u32 - 1).min(max_start_gop)
            }
        };
        let label = match &spec.labels {
            LabelPattern::Weighted(w) => {
                let roll: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &w[w.len() - 1].0;
                for (l, p) in w {
                    acc += p;
                    if roll < acc {
                        chosen = l;
                        break;
                    }
                }
                chosen.clone()
            }
            LabelPattern::MiddleThird { mid, rest } => {
                if qi >= spec.n_queries / 3 && qi < spec.n_queries * 2 / 3 {
                    mid.clone()
                } else {
                    rest.clone()
                }
            }
        };
        let start = start_gop * spec.gop_len;
        let end = (start + spec.span).min(spec.video_len);
        queries.push(QuerySpec::new(
            &spec.video,
            LabelPredicate::single(label),
            Some(start..end),
        ));
    }
    Ok(queries)
}

/// Ready-made scenes for the benchmark patterns.
pub mod scenes {
    use super::*;

    /// Sparse traffic-like scene: a small car and person moving slowly.
    pub fn sparse(dims: FrameDims, length: u32) -> SceneSpec {
        SceneSpec {
            dims,
            length,
            objects: vec![
                ObjectSpec {
                    label: "car".into(),
                    width: 96,
                    height: 64,
                    trajectory: Trajectory::Linear {
                        x0: 40.0,
                        y0: 180.0,
                        dx: 1.1,
                        dy: 0.1,
                    },
                    texture_seed: 1,
                },
                ObjectSpec {
                    label: "person".into(),
                    width: 32,
                    height: 64,
                    trajectory: Trajectory::Linear {
                        x0: 420.0,
                        y0: 60.0,
                        dx: -0.4,
                        dy: 0.2,
                    },
                    texture_seed: 2,
                },
                ObjectSpec {
                    label: "light".into(),
                    width: 32,
                    height: 32,
                    trajectory: Trajectory::Static { x: 560, y: 16 },
                    texture_seed: 3,
                },
            ],
            density: DensityClass::Sparse,
            target_coverage: None,
        }
    }

    /// Dense market-like scene: large overlapping objects covering most
    /// of the frame, where tiling cannot pay off.
    pub fn dense(dims: FrameDims, length: u32) -> SceneSpec {
        SceneSpec {
            dims,
            length,
            objects: vec![
                ObjectSpec {
                    label: "crowd".into(),
                    width: dims.width - 2 * (dims.width / 10),
                    height: dims.height - dims.height / 8,
                    trajectory: Trajectory::Linear {
                        x0: 10.0,
                        y0: 4.0,
                        dx: 0.35,
                        dy: 0.05,
                    },
                    texture_seed: 4,
                },
                ObjectSpec {
                    label: "market".into(),
                    width: dims.width - 2 * (dims.width / 8),
                    height: dims.height - dims.height / 4,
                    trajectory: Trajectory::Linear {
                        x0: 80.0,
                        y0: 30.0,
                        dx: -0.3,
                        dy: 0.1,
                    },
                    texture_seed: 5,
                },
            ],
            density: DensityClass::Dense,
            target_coverage: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_scene_is_blank() {
        let spec = SceneSpec {
            dims: FrameDims::new(64, 32),
            length: 4,
            objects: vec![],
            density: DensityClass::Sparse,
            target_coverage: None,
        };
        let (frames, boxes) = generate_scene(&spec, 1).unwrap();
        assert!(boxes.is_empty());
        assert_eq!(frames.frame(0), frames.frame(3));
    }

    #[test]
    fn single_small_object_is_sparse() {
        let spec = SceneSpec {
            dims: FrameDims::new(640, 320),
            length: 30,
            objects: vec![ObjectSpec {
                label: "car".into(),
                width: 64,
                height: 64,
                trajectory: Trajectory::Static { x: 100, y: 100 },
                texture_seed: 9,
            }],
            density: DensityClass::Sparse,
            target_coverage: Some(0.02),
        };
        let (_frames, boxes) = generate_scene(&spec, 1).unwrap();
        assert_eq!(boxes.len(), 30);
        let d = realized_density(&boxes, spec.dims, spec.length);
        assert!((d - 0.02).abs() < 0.02, "density {d}");
    }

    #[test]
    fn six_large_objects_are_dense() {
        let objects: Vec<ObjectSpec> = (0..6)
            .map(|i| ObjectSpec {
                label: format!("o{i}"),
                width: 160,
                height: 160,
                trajectory: Trajectory::Static {
                    x: (i % 3) * 200,
                    y: (i / 3) * 160,
                },
                texture_seed: i as u64,
            })
            .collect();
        let spec = SceneSpec {
            dims: FrameDims::new(640, 320),
            length: 8,
            objects,
            density: DensityClass::Dense,
            target_coverage: None,
        };
        let (_frames, boxes) = generate_scene(&spec, 1).unwrap();
        assert!(realized_density(&boxes, spec.dims, spec.length) >= DENSITY_SPLIT);
    }

    #[test]
    fn density_class_mismatch_errors() {
        let mut spec = scenes::dense(FrameDims::new(640, 320), 8);
        spec.density = DensityClass::Sparse;
        assert!(matches!(
            generate_scene(&spec, 1),
            Err(Error::InfeasibleDensity { .. })
        ));
    }

    #[test]
    fn scene_is_deterministic_and_objects_stay_in_frame() {
        let spec = scenes::sparse(FrameDims::new(640, 320), 90);
        let (f1, b1) = generate_scene(&spec, 7).unwrap();
        let (f2, b2) = generate_scene(&spec, 7).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(b1, b2);
        for b in &b1 {
            assert!(b.x2 <= 640 && b.y2 <= 320);
        }
        let (f3, _) = generate_scene(&spec, 8).unwrap();
        assert_ne!(f1, f3);
    }

    #[test]
    fn workload_analogs() {
        let labels = vec!["car".to_string(), "person".to_string(), "light".to_string()];
        let w1 = WorkloadSpec::analog(WorkloadPattern::W1, "v", 1800, 30, &labels).unwrap();
        let qs = generate_workload(&w1, 1).unwrap();
        assert_eq!(qs.len(), 100);
        assert!(qs.iter().all(|q| q.predicate == LabelPredicate::single("car")));

        let w2 = WorkloadSpec::analog(WorkloadPattern::W2, "v", 1800, 30, &labels).unwrap();
        let qs = generate_workload(&w2, 1).unwrap();
        let prefix_end = 1800 / 4;
        assert!(qs
            .iter()
            .all(|q| q.frame_range.as_ref().unwrap().start < prefix_end));
        let cars = qs
            .iter()
            .filter(|q| q.predicate == LabelPredicate::single("car"))
            .count();
        assert!((30..=70).contains(&cars), "car share {cars}");

        let w4 = WorkloadSpec::analog(WorkloadPattern::W4, "v", 1800, 30, &labels).unwrap();
        let qs = generate_workload(&w4, 1).unwrap();
        assert_eq!(qs.len(), 200);
        for (i, q) in qs.iter().enumerate() {
            let want = if (66..133).contains(&i) { "person" } else { "car" };
            assert_eq!(q.predicate, LabelPredicate::single(want), "query {i}");
        }
    }

    #[test]
    fn zipfian_skews_toward_start() {
        let labels = vec!["car".to_string(), "person".to_string(), "light".to_string()];
        let w3 = WorkloadSpec::analog(WorkloadPattern::W3, "v", 1800, 30, &labels).unwrap();
        let qs = generate_workload(&w3, 3).unwrap();
        let first_half = qs
            .iter()
            .filter(|q| q.frame_range.as_ref().unwrap().start < 900)
            .count();
        assert!(first_half > 70, "zipfian start skew too weak: {first_half}");
        let lights = qs
            .iter()
            .filter(|q| q.predicate == LabelPredicate::single("light"))
            .count();
        assert!(lights <= 15, "rare label too frequent: {lights}");
    }

    #[test]
    fn workload_is_deterministic() {
        let labels = vec!["car".to_string(), "person".to_string(), "light".to_string()];
        let w = WorkloadSpec::analog(WorkloadPattern::W3, "v", 900, 30, &labels).unwrap();
        assert_eq!(generate_workload(&w, 5).unwrap(), generate_workload(&w, 5).unwrap());
    }

    #[test]
    fn union_area_handles_overlap() {
        let rects = vec![Rect::new(0, 0, 10, 10), Rect::new(5, 5, 15, 15)];
        assert_eq!(union_area(&rects), 100 + 100 - 25);
        assert_eq!(union_area(&[]), 0);
    }
}
