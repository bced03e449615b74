//! Integer-sampled sequences and paths.
//!
//! Samples are stored as a base point plus the transporters between consecutive
//! samples, so relative positions along long paths are products of step isometries
//! rather than differences of huge matrices.

use serde::{Deserialize, Serialize};

use crate::error::{MorseError, Result};
use crate::flags::{FlagChain, FlagChainJson};
use crate::symspace::{decompose, transporter, Decomposition, Isometry, MatrixJson, SpdPoint};

/// Points `x_0, …, x_N` with strictly increasing integer timestamps.
#[derive(Debug, Clone)]
pub struct PointSequence {
    times: Vec<i64>,
    base: SpdPoint,
    /// `steps[k]` is the transporter `x_k → x_{k+1}`.
    steps: Vec<Isometry>,
}

impl PointSequence {
    pub fn from_steps(times: Vec<i64>, base: SpdPoint, steps: Vec<Isometry>) -> Result<Self> {
        if times.len() != steps.len() + 1 {
            return Err(MorseError::Invalid(format!(
                "{} timestamps for {} points",
                times.len(),
                steps.len() + 1
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MorseError::Invalid("timestamps must be strictly increasing".into()));
        }
        if steps.iter().any(|s| s.dim() != base.dim()) {
            return Err(MorseError::Dimension {
                expected: base.dim(),
                got: steps.iter().map(|s| s.dim()).find(|&d| d != base.dim()).unwrap_or(0),
            });
        }
        Ok(PointSequence { times, base, steps })
    }

    pub fn from_points(times: Vec<i64>, points: &[SpdPoint]) -> Result<Self> {
        let base = points
            .first()
            .ok_or_else(|| MorseError::Invalid("empty sequence".into()))?
            .clone();
        if let Some(p) = points.iter().find(|p| p.dim() != base.dim()) {
            return Err(MorseError::Dimension {
                expected: base.dim(),
                got: p.dim(),
            });
        }
        let steps = points.windows(2).map(|w| transporter(&w[0], &w[1])).collect();
        PointSequence::from_steps(times, base, steps)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn base(&self) -> &SpdPoint {
        &self.base
    }

    pub fn steps(&self) -> &[Isometry] {
        &self.steps
    }

    /// Transporter `x_i → x_j` (indices, not times).
    pub fn transporter(&self, i: usize, j: usize) -> Isometry {
        chain(&self.steps, i, j, self.dim())
    }

    /// The `i`-th point in absolute coordinates.
    pub fn point(&self, i: usize) -> SpdPoint {
        self.base.frame_compose(&self.transporter(0, i))
    }

    pub fn points(&self) -> Vec<SpdPoint> {
        let mut out = Vec::with_capacity(self.len());
        let mut f = self.base.frame().clone();
        out.push(self.base.clone());
        for s in &self.steps {
            f = f.compose(s);
            out.push(SpdPoint::from_frame(f.clone()));
        }
        out
    }

    /// Applies `g` to every point; the steps are unchanged.
    pub fn transform(&self, g: &Isometry) -> PointSequence {
        PointSequence {
            times: self.times.clone(),
            base: self.base.transform(g),
            steps: self.steps.clone(),
        }
    }
}

/// Product `steps[i] ⋯ steps[j−1]`, or the inverse product when `j < i`.
fn chain(steps: &[Isometry], i: usize, j: usize, n: usize) -> Isometry {
    let mut acc = Isometry::identity(n);
    if i <= j {
        for s in &steps[i..j] {
            acc = acc.compose(s);
        }
    } else {
        for s in steps[j..i].iter().rev() {
            acc = acc.compose(&s.inverse());
        }
    }
    acc
}

/// A path `p: [t_0, t_0 + N] ∩ ℤ → X`, optionally with ideal endpoints.
#[derive(Debug, Clone)]
pub struct DiscretePath {
    start: i64,
    base: SpdPoint,
    steps: Vec<Isometry>,
    pub start_flag: Option<FlagChain>,
    pub end_flag: Option<FlagChain>,
}

impl DiscretePath {
    pub fn from_steps(start: i64, base: SpdPoint, steps: Vec<Isometry>) -> Result<Self> {
        if let Some(s) = steps.iter().find(|s| s.dim() != base.dim()) {
            return Err(MorseError::Dimension {
                expected: base.dim(),
                got: s.dim(),
            });
        }
        Ok(DiscretePath {
            start,
            base,
            steps,
            start_flag: None,
            end_flag: None,
        })
    }

    pub fn from_points(start: i64, points: &[SpdPoint]) -> Result<Self> {
        let seq = PointSequence::from_points((0..points.len() as i64).map(|k| start + k).collect(), points)?;
        DiscretePath::from_steps(start, seq.base, seq.steps)
    }

    /// Orbit path `t ↦ γ_t x` with `γ_{t+1} = γ_t s_t`: its steps are the conjugates
    /// `f⁻¹ s_t f` by the frame `f` of `x`.
    pub fn orbit(start: i64, base: &SpdPoint, generators: &[Isometry]) -> Result<Self> {
        let f = base.frame();
        let fi = f.inverse();
        let steps = generators.iter().map(|s| fi.compose(s).compose(f)).collect();
        DiscretePath::from_steps(start, base.clone(), steps)
    }

    /// Unit-time path through the points of `seq` along Riemannian geodesics, with every
    /// segment cut into equal pieces no longer than `max_step`.
    pub fn densify(start: i64, seq: &PointSequence, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(MorseError::Invalid("step bound must be positive".into()));
        }
        let mut steps = Vec::new();
        for w in seq.steps() {
            let d = decompose(w);
            let k = ((d.cartan().norm() / max_step).ceil() as usize).max(1);
            if k == 1 {
                steps.push(w.clone());
                continue;
            }
            let piece = Isometry::diagonal_exp(&d.log_sv.iter().map(|l| l / k as f64).collect::<Vec<_>>());
            let u = Isometry::from_parts(d.u.clone(), d.u.transpose());
            let vt = Isometry::from_parts(d.v.transpose(), d.v.clone());
            steps.push(u.compose(&piece));
            steps.extend(std::iter::repeat_n(piece.clone(), k - 2));
            steps.push(piece.compose(&vt));
        }
        DiscretePath::from_steps(start, seq.base().clone(), steps)
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.steps.len() as i64
    }

    pub fn times(&self) -> Vec<i64> {
        (self.start..=self.end()).collect()
    }

    pub fn base(&self) -> &SpdPoint {
        &self.base
    }

    pub fn steps(&self) -> &[Isometry] {
        &self.steps
    }

    fn index(&self, t: i64) -> Result<usize> {
        if t < self.start || t > self.end() {
            return Err(MorseError::Invalid(format!(
                "time {t} outside [{}, {}]",
                self.start,
                self.end()
            )));
        }
        Ok((t - self.start) as usize)
    }

    /// Transporter `p(t1) → p(t2)`.
    pub fn transporter(&self, t1: i64, t2: i64) -> Result<Isometry> {
        Ok(chain(&self.steps, self.index(t1)?, self.index(t2)?, self.dim()))
    }

    pub fn point(&self, t: i64) -> Result<SpdPoint> {
        Ok(self.base.frame_compose(&self.transporter(self.start, t)?))
    }

    pub fn points(&self) -> Vec<SpdPoint> {
        self.as_sequence().points()
    }

    pub fn as_sequence(&self) -> PointSequence {
        PointSequence {
            times: self.times(),
            base: self.base.clone(),
            steps: self.steps.clone(),
        }
    }

    /// Restriction to `[t1, t2]`; endpoint flags are dropped.
    pub fn window(&self, t1: i64, t2: i64) -> Result<DiscretePath> {
        let (i, j) = (self.index(t1)?, self.index(t2)?);
        if i > j {
            return Err(MorseError::Invalid(format!("empty window [{t1}, {t2}]")));
        }
        Ok(DiscretePath {
            start: t1,
            base: self.base.frame_compose(&chain(&self.steps, 0, i, self.dim())),
            steps: self.steps[i..j].to_vec(),
            start_flag: None,
            end_flag: None,
        })
    }

    /// Samples at `t_0, t_0 + s, …` as a sequence with their original times.
    pub fn coarse_samples(&self, s: usize) -> Result<PointSequence> {
        if s == 0 {
            return Err(MorseError::Invalid("scale must be at least 1".into()));
        }
        let k = self.steps.len() / s;
        let steps = (0..k).map(|c| chain(&self.steps, c * s, (c + 1) * s, self.dim())).collect();
        let times = (0..=k as i64).map(|c| self.start + c * s as i64).collect();
        PointSequence::from_steps(times, self.base.clone(), steps)
    }

    /// All pairwise transporters decomposed, indexed by sample offsets.
    pub fn pair_decompositions(&self) -> Vec<Vec<Option<Decomposition>>> {
        let n = self.len();
        let mut out: Vec<Vec<Option<Decomposition>>> = vec![vec![None; n]; n];
        for i in 0..n {
            let mut acc = Isometry::identity(self.dim());
            for j in i + 1..n {
                acc = acc.compose(&self.steps[j - 1]);
                out[i][j] = Some(decompose(&acc));
            }
        }
        out
    }

    pub fn transform(&self, g: &Isometry) -> DiscretePath {
        DiscretePath {
            start: self.start,
            base: self.base.transform(g),
            steps: self.steps.clone(),
            start_flag: self.start_flag.as_ref().map(|f| f.transform(g)),
            end_flag: self.end_flag.as_ref().map(|f| f.transform(g)),
        }
    }

    pub fn to_json(&self) -> PathJson {
        PathJson {
            samples: self
                .times()
                .into_iter()
                .zip(self.points())
                .map(|(t, p)| SampleJson { t, point: p.to_json() })
                .collect(),
            steps: Some(self.steps.iter().map(|s| s.to_json()).collect()),
            start_flag: self.start_flag.as_ref().map(|f| f.to_json()),
            end_flag: self.end_flag.as_ref().map(|f| f.to_json()),
        }
    }

    pub fn from_json(j: &PathJson) -> Result<Self> {
        let first = j
            .samples
            .first()
            .ok_or_else(|| MorseError::Parse("path has no samples".into()))?;
        for (k, s) in j.samples.iter().enumerate() {
            if s.t != first.t + k as i64 {
                return Err(MorseError::Parse("path times must form a contiguous integer interval".into()));
            }
        }
        let mut path = match &j.steps {
            Some(steps) => {
                if steps.len() + 1 != j.samples.len() {
                    return Err(MorseError::Parse("steps and samples disagree in length".into()));
                }
                let steps = steps.iter().map(Isometry::from_json).collect::<Result<Vec<_>>>()?;
                DiscretePath::from_steps(first.t, SpdPoint::from_json(&first.point)?, steps)?
            }
            None => {
                let pts = j.samples.iter().map(|s| SpdPoint::from_json(&s.point)).collect::<Result<Vec<_>>>()?;
                DiscretePath::from_points(first.t, &pts)?
            }
        };
        path.start_flag = j.start_flag.as_ref().map(FlagChain::from_json).transpose()?;
        path.end_flag = j.end_flag.as_ref().map(FlagChain::from_json).transpose()?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleJson {
    pub t: i64,
    pub point: MatrixJson,
}

/// JSON form of a path: samples `(t, point)` and optionally the exact step isometries,
/// which take precedence over the sample matrices when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathJson {
    pub samples: Vec<SampleJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_flag: Option<FlagChainJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_flag: Option<FlagChainJson>,
}
