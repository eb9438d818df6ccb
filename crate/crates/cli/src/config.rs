//! Flat `key = value` run configuration. Files are read first, then
//! command-line overrides are applied in order; the resolved set is echoed
//! into the output directory and can be fed back with `--config`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use hetfuse::baselines::BaselineConfig;
use hetfuse::evalbench::BoxFormat;
use hetfuse::registration::RegistrationMode;
use hetfuse::{RgifConfig, RgmafConfig};

pub const RESOLVED_CONFIG: &str = "config.resolved.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Seeds every randomised step (RANSAC sampling).
    pub seed: u64,
    /// Worker threads for batch fusion; 0 means one per core.
    pub jobs: usize,
    pub method: String,
    pub dump_diagnostics: bool,
    pub rgif: RgifConfig,
    pub rgmaf: RgmafConfig,
    pub baseline: BaselineConfig,
    pub eval_format: BoxFormat,
    pub eval_thresholds: Vec<f64>,
    pub bench_warmup: usize,
    pub bench_repeats: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            method: "rgif".into(),
            dump_diagnostics: false,
            rgif: RgifConfig::default(),
            rgmaf: RgmafConfig::default(),
            baseline: BaselineConfig::default(),
            eval_format: BoxFormat::Voc,
            eval_thresholds: vec![0.5],
            bench_warmup: 2,
            bench_repeats: 10,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| anyhow!("`{key}`: cannot parse `{v}`: {e}"))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("`{key}`: expected true or false, found `{v}`"),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| num::<f64>(key, t.trim())).collect()
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_override(line)
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value, found `{assignment}`"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let reg = &mut self.rgif.registration;
        match key {
            "seed" => self.seed = num(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "method" => self.method = v.to_string(),
            "dump_diagnostics" => self.dump_diagnostics = flag(key, v)?,

            "registration.mode" => reg.mode = RegistrationMode::from_str(v)?,
            "registration.max_iterations" => reg.max_iterations = num(key, v)?,
            "registration.termination_eps" => reg.termination_eps = num(key, v)?,
            "registration.pyramid_levels" => reg.pyramid_levels = num(key, v)?,
            "registration.max_estimation_side" => reg.max_estimation_side = num(key, v)?,
            "registration.ransac_iterations" => reg.ransac.max_iterations = num(key, v)?,
            "registration.ransac_threshold" => reg.ransac.threshold = num(key, v)?,
            "registration.ransac_confidence" => reg.ransac.confidence = num(key, v)?,
            "registration.flow_levels" => reg.flow.levels = num(key, v)?,
            "registration.flow_warps" => reg.flow.warps = num(key, v)?,
            "registration.flow_iterations" => reg.flow.iterations = num(key, v)?,
            "registration.flow_alpha" => reg.flow.alpha = num(key, v)?,
            "registration.flow_max_magnitude" => reg.flow.max_magnitude = num(key, v)?,
            "registration.flow_presmooth" => reg.flow.presmooth = num(key, v)?,

            "rgif.radius" => self.rgif.guided.radius = num(key, v)?,
            "rgif.epsilon" => self.rgif.guided.epsilon = num(key, v)?,
            "rgif.upsample_factor" => self.rgif.upsample_factor = num(key, v)?,
            "rgif.output_at_native_thermal_grid" => {
                self.rgif.output_at_native_thermal_grid = flag(key, v)?
            }
            "rgif.normalize_before_upsample" => self.rgif.normalize_before_upsample = flag(key, v)?,

            "rgmaf.beta" => self.rgmaf.beta = num(key, v)?,
            "rgmaf.temperature" => self.rgmaf.temperature = num(key, v)?,
            "rgmaf.energy_window" => self.rgmaf.energy_window = num(key, v)?,
            "rgmaf.ncc_window" => self.rgmaf.ncc_window = num(key, v)?,
            "rgmaf.gate_smooth_sigma" => self.rgmaf.gate_smooth_sigma = num(key, v)?,
            "rgmaf.base_sigma" => self.rgmaf.base_sigma = num(key, v)?,
            "rgmaf.detail_clip_k" => self.rgmaf.detail_clip_k = num(key, v)?,
            "rgmaf.edge_band" => self.rgmaf.edge_band = num(key, v)?,

            "baseline.alpha" => self.baseline.alpha = num(key, v)?,
            "baseline.w_thermal" => self.baseline.w_thermal = num(key, v)?,
            "baseline.w_visual" => self.baseline.w_visual = num(key, v)?,
            "baseline.pyramid_levels" => self.baseline.pyramid_levels = num(key, v)?,
            "baseline.wavelet_levels" => self.baseline.wavelet_levels = num(key, v)?,
            "baseline.guided_radius" => self.baseline.guided.radius = num(key, v)?,
            "baseline.guided_epsilon" => self.baseline.guided.epsilon = num(key, v)?,
            "baseline.decision_iou_thr" => self.baseline.decision_iou_thr = num(key, v)?,

            "eval.format" => self.eval_format = BoxFormat::from_str(v)?,
            "eval.thresholds" => self.eval_thresholds = list(key, v)?,
            "bench.warmup" => self.bench_warmup = num(key, v)?,
            "bench.repeats" => self.bench_repeats = num(key, v)?,
            _ => bail!("unknown config key `{key}`"),
        }
        self.sync();
        Ok(())
    }

    /// RGMAF shares the registration block and the seed reaches RANSAC.
    fn sync(&mut self) {
        self.rgif.registration.ransac.seed = self.seed;
        self.rgmaf.registration = self.rgif.registration.clone();
    }

    pub fn validate(&self) -> Result<()> {
        self.rgif.validate()?;
        self.rgmaf.validate()?;
        self.baseline.validate()?;
        if self.eval_thresholds.is_empty()
            || self.eval_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0))
        {
            bail!("eval.thresholds must be a non-empty list in (0, 1]");
        }
        if self.bench_repeats == 0 {
            bail!("bench.repeats must be >= 1");
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let reg = &self.rgif.registration;
        let b = |v: bool| v.to_string();
        let thresholds = self
            .eval_thresholds
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("method", self.method.clone()),
            ("dump_diagnostics", b(self.dump_diagnostics)),
            ("registration.mode", reg.mode.to_string()),
            (
                "registration.max_iterations",
                reg.max_iterations.to_string(),
            ),
            (
                "registration.termination_eps",
                reg.termination_eps.to_string(),
            ),
            (
                "registration.pyramid_levels",
                reg.pyramid_levels.to_string(),
            ),
            (
                "registration.max_estimation_side",
                reg.max_estimation_side.to_string(),
            ),
            (
                "registration.ransac_iterations",
                reg.ransac.max_iterations.to_string(),
            ),
            (
                "registration.ransac_threshold",
                reg.ransac.threshold.to_string(),
            ),
            (
                "registration.ransac_confidence",
                reg.ransac.confidence.to_string(),
            ),
            ("registration.flow_levels", reg.flow.levels.to_string()),
            ("registration.flow_warps", reg.flow.warps.to_string()),
            (
                "registration.flow_iterations",
                reg.flow.iterations.to_string(),
            ),
            ("registration.flow_alpha", reg.flow.alpha.to_string()),
            (
                "registration.flow_max_magnitude",
                reg.flow.max_magnitude.to_string(),
            ),
            (
                "registration.flow_presmooth",
                reg.flow.presmooth.to_string(),
            ),
            ("rgif.radius", self.rgif.guided.radius.to_string()),
            ("rgif.epsilon", self.rgif.guided.epsilon.to_string()),
            (
                "rgif.upsample_factor",
                self.rgif.upsample_factor.to_string(),
            ),
            (
                "rgif.output_at_native_thermal_grid",
                b(self.rgif.output_at_native_thermal_grid),
            ),
            (
                "rgif.normalize_before_upsample",
                b(self.rgif.normalize_before_upsample),
            ),
            ("rgmaf.beta", self.rgmaf.beta.to_string()),
            ("rgmaf.temperature", self.rgmaf.temperature.to_string()),
            ("rgmaf.energy_window", self.rgmaf.energy_window.to_string()),
            ("rgmaf.ncc_window", self.rgmaf.ncc_window.to_string()),
            (
                "rgmaf.gate_smooth_sigma",
                self.rgmaf.gate_smooth_sigma.to_string(),
            ),
            ("rgmaf.base_sigma", self.rgmaf.base_sigma.to_string()),
            ("rgmaf.detail_clip_k", self.rgmaf.detail_clip_k.to_string()),
            ("rgmaf.edge_band", self.rgmaf.edge_band.to_string()),
            ("baseline.alpha", self.baseline.alpha.to_string()),
            ("baseline.w_thermal", self.baseline.w_thermal.to_string()),
            ("baseline.w_visual", self.baseline.w_visual.to_string()),
            (
                "baseline.pyramid_levels",
                self.baseline.pyramid_levels.to_string(),
            ),
            (
                "baseline.wavelet_levels",
                self.baseline.wavelet_levels.to_string(),
            ),
            (
                "baseline.guided_radius",
                self.baseline.guided.radius.to_string(),
            ),
            (
                "baseline.guided_epsilon",
                self.baseline.guided.epsilon.to_string(),
            ),
            (
                "baseline.decision_iou_thr",
                self.baseline.decision_iou_thr.to_string(),
            ),
            ("eval.format", self.eval_format.to_string()),
            ("eval.thresholds", thresholds),
            ("bench.warmup", self.bench_warmup.to_string()),
            ("bench.repeats", self.bench_repeats.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn echo(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join(RESOLVED_CONFIG), self.to_text())?;
        Ok(())
    }

    /// Worker count after resolving 0 to the machine's parallelism.
    pub fn workers(&self) -> usize {
        match self.jobs {
            0 => std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            n => n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nseed = 7\nrgif.epsilon = 0.125\neval.thresholds = 0.5, 0.75\nregistration.mode = feature_homography\n")
            .unwrap();
        assert_eq!(c.rgif.registration.ransac.seed, 7);
        assert_eq!(
            c.rgmaf.registration.mode,
            RegistrationMode::FeatureHomography
        );
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(c.apply_override("nope=1").is_err());
        assert!(c.apply_override("seed").is_err());
        assert!(c.apply_override("seed=abc").is_err());
        assert!(c.apply_override("dump_diagnostics=maybe").is_err());
    }

    #[test]
    fn later_assignments_win() {
        let mut c = RunConfig::default();
        c.apply_text("rgmaf.beta = 1\nrgmaf.beta = -2\n").unwrap();
        assert_eq!(c.rgmaf.beta, -2.0);
    }
}
