use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied when a measured pass is below clock resolution, in ms.
const CLOCK_FLOOR_MS: f64 = 1e-6;

/// Per-image stage means. `latency` and `fps` are derived on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub t_pre: f64,
    pub t_inf: f64,
    pub t_post: f64,
    pub latency: f64,
    pub fps: f64,
    /// Timed images (repeats x inputs).
    pub samples: usize,
    /// Coefficient of variation of per-repeat mean latency.
    pub latency_cv: f64,
}

impl TimingReport {
    /// Builds a report from stage times in milliseconds.
    pub fn from_stages(t_pre: f64, t_inf: f64, t_post: f64) -> Result<Self> {
        let stages = [t_pre, t_inf, t_post];
        if stages.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig(
                "stage times must be finite and >= 0".into(),
            ));
        }
        let latency = t_pre + t_inf + t_post;
        if latency <= 0.0 {
            return Err(Error::InvalidConfig("latency must be > 0".into()));
        }
        Ok(Self {
            t_pre,
            t_inf,
            t_post,
            latency,
            fps: 1000.0 / latency,
            samples: 1,
            latency_cv: 0.0,
        })
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "t_pre_ms={}\nt_inf_ms={}\nt_post_ms={}\nlatency_ms={}\nfps={}\nsamples={}\nlatency_cv={}\n",
            self.t_pre, self.t_inf, self.t_post, self.latency, self.fps, self.samples, self.latency_cv
        )
    }
}

/// A pipeline split into the three timed stages.
pub trait StagedPipeline {
    type Loaded;
    type Fused;

    /// Number of inputs in one pass.
    fn len(&self) -> usize;
    fn preprocess(&mut self, index: usize) -> Result<Self::Loaded>;
    fn infer(&mut self, loaded: Self::Loaded) -> Result<Self::Fused>;
    fn postprocess(&mut self, fused: Self::Fused) -> Result<()>;
}

/// Runs `warmup` untimed passes, then `repeats` timed passes over every
/// input on the calling thread.
pub fn benchmark<P: StagedPipeline>(
    pipeline: &mut P,
    warmup: usize,
    repeats: usize,
) -> Result<TimingReport> {
    let n = pipeline.len();
    if n == 0 || repeats == 0 {
        return Err(Error::InvalidConfig(
            "benchmark needs inputs and repeats >= 1".into(),
        ));
    }
    for _ in 0..warmup {
        for i in 0..n {
            let l = pipeline.preprocess(i)?;
            let f = pipeline.infer(l)?;
            pipeline.postprocess(f)?;
        }
    }
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let (mut pre, mut inf, mut post) = (0.0, 0.0, 0.0);
    let mut per_repeat = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut pass = 0.0;
        for i in 0..n {
            let t = Instant::now();
            let l = pipeline.preprocess(i)?;
            let a = ms(t);
            let t = Instant::now();
            let f = pipeline.infer(l)?;
            let b = ms(t);
            let t = Instant::now();
            pipeline.postprocess(f)?;
            let c = ms(t);
            pre += a;
            inf += b;
            post += c;
            pass += a + b + c;
        }
        per_repeat.push(pass / n as f64);
    }
    let samples = (repeats * n) as f64;
    let (pre, mut inf, post) = (pre / samples, inf / samples, post / samples);
    if pre + inf + post <= 0.0 {
        inf = CLOCK_FLOOR_MS;
    }
    let mut report = TimingReport::from_stages(pre, inf, post)?;
    report.samples = repeats * n;
    report.latency_cv = coefficient_of_variation(&per_repeat);
    Ok(report)
}

/// Sample standard deviation over mean; 0 for fewer than two values.
pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean
}
