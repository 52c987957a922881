//! Run configuration, the forward-solve cache and the staged end-to-end run.
//!
//! Stages: sample, solve, fit, density, gsa, compare. Each writes its
//! artifacts under the output directory; later stages only consume what
//! earlier ones produced (samples, solves, surrogate files) plus the seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayesnet::{empirical_correlation, ModelKind, PriorModel, SampleBatch};
use crate::closure::{DiffusivityField, EffectiveProps};
use crate::density;
use crate::error::{Error, Result};
use crate::geometry::{Bounds, HyperRanges, Param, PoreParams};
use crate::gsa::{self, EvalMeasure, MarginalMode, MiEstimate, MiOptions, MiSamples, RankingRow};
use crate::par;
use crate::rng::derive_seed;
use crate::stats::{cramer_test, CramerResult, Points};
use crate::surrogate::{fit_least_squares, sobol_first_order, PcBasis, PcSurrogate, Qoi, SolverConfig};

/// Share of failed forward solves that aborts a run.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeOverrides {
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub resolution: usize,
    pub tol: f64,
    /// Tube-to-mesopore diffusivity ratio.
    pub diffusivity_ratio: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            resolution: 64,
            tol: 1e-8,
            diffusivity_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub orders: [usize; 4],
    /// Training solves per basis term.
    pub oversample: f64,
    /// Explicit training size; 0 means `oversample * terms`.
    pub n_train: usize,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self {
            orders: [4; 4],
            oversample: 2.0,
            n_train: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeSection {
    pub grid: usize,
}

impl Default for KdeSection {
    fn default() -> Self {
        Self {
            grid: density::DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsaSection {
    pub n_kde: usize,
    pub m_mc: usize,
    /// `kde`, `mixed` or `uniform`.
    pub marginals: String,
    /// `product` or `joint`.
    pub measure: String,
}

impl Default for GsaSection {
    fn default() -> Self {
        Self {
            n_kde: 1_000_000,
            m_mc: 10_000,
            marginals: "kde".into(),
            measure: "product".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CramerSection {
    /// `auto`, `none`, or a model tag.
    pub reference: String,
    /// Reference hyper-range preset; empty means the run's own ranges.
    pub reference_preset: String,
    /// Surrogate draws per group.
    pub n: usize,
    pub resamples: usize,
    pub confidence: f64,
}

impl Default for CramerSection {
    fn default() -> Self {
        Self {
            reference: "auto".into(),
            reference_preset: String::new(),
            n: 2000,
            resamples: 1000,
            confidence: 0.95,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    /// Empty means `<out>/cache`; `none` disables caching.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    pub preset: String,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    pub ranges: RangeOverrides,
    pub solver: SolverSection,
    pub surrogate: SurrogateSection,
    pub kde: KdeSection,
    pub gsa: GsaSection,
    pub cramer: CramerSection,
    pub cache: CacheSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "p1".into(),
            preset: "narrow".into(),
            seed: 0,
            jobs: 0,
            out: PathBuf::from("results"),
            ranges: RangeOverrides::default(),
            solver: SolverSection::default(),
            surrogate: SurrogateSection::default(),
            kde: KdeSection::default(),
            gsa: GsaSection::default(),
            cramer: CramerSection::default(),
            cache: CacheSection::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.prior()?;
        self.mi_options()?;
        self.solver_config().diffusivity.validate()?;
        self.basis().validate()?;
        if self.solver.resolution < 16 {
            return Err(cfg_err("solver.resolution must be at least 16"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(cfg_err("solver.tol must lie in (0, 1)"));
        }
        if self.n_train() < self.basis().len() {
            return Err(cfg_err(format!(
                "{} training solves for {} basis terms",
                self.n_train(),
                self.basis().len()
            )));
        }
        if self.kde.grid < 8 {
            return Err(cfg_err("kde.grid must be at least 8"));
        }
        if self.cramer.n < 2 || self.cramer.resamples < 200 {
            return Err(cfg_err("cramer.n must be >= 2 and cramer.resamples >= 200"));
        }
        if !(self.cramer.confidence > 0.0 && self.cramer.confidence < 1.0) {
            return Err(cfg_err("cramer.confidence must lie in (0, 1)"));
        }
        self.reference_prior()?;
        Ok(())
    }

    pub fn ranges(&self) -> Result<HyperRanges> {
        let mut h = HyperRanges::preset(&self.preset)
            .ok_or_else(|| cfg_err(format!("unknown preset '{}'", self.preset)))?;
        let o = &self.ranges;
        for (slot, v) in [(&mut h.r, o.r), (&mut h.theta, o.theta), (&mut h.d, o.d), (&mut h.l, o.l)] {
            if let Some([lo, hi]) = v {
                *slot = Bounds::new(lo, hi);
            }
        }
        h.validate()?;
        Ok(h)
    }

    pub fn prior(&self) -> Result<PriorModel> {
        let kind = ModelKind::parse(&self.model).ok_or_else(|| cfg_err(format!("unknown model '{}'", self.model)))?;
        Ok(PriorModel::new(kind, self.ranges()?))
    }

    /// Model the run is compared against, if any. `auto` picks the
    /// standard comparisons: P1 against P0 on narrow ranges and against P2
    /// on physical ones.
    pub fn reference_prior(&self) -> Result<Option<PriorModel>> {
        let own = self.prior()?;
        let kind = match self.cramer.reference.to_ascii_lowercase().as_str() {
            "none" => return Ok(None),
            "auto" => match own.kind {
                ModelKind::P1 if self.preset == "physical" => ModelKind::P2,
                ModelKind::P1 => ModelKind::P0,
                _ => ModelKind::P1,
            },
            tag => ModelKind::parse(tag).ok_or_else(|| cfg_err(format!("unknown reference model '{tag}'")))?,
        };
        let ranges = if self.cramer.reference_preset.is_empty() {
            own.ranges
        } else {
            HyperRanges::preset(&self.cramer.reference_preset)
                .ok_or_else(|| cfg_err(format!("unknown preset '{}'", self.cramer.reference_preset)))?
        };
        if kind == own.kind && ranges == own.ranges {
            return Err(cfg_err("reference model equals the run's own model"));
        }
        Ok(Some(PriorModel::new(kind, ranges)))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            resolution: self.solver.resolution,
            tol: self.solver.tol,
            diffusivity: DiffusivityField::with_ratio(self.solver.diffusivity_ratio),
        }
    }

    pub fn basis(&self) -> PcBasis {
        PcBasis::new(self.surrogate.orders)
    }

    pub fn n_train(&self) -> usize {
        if self.surrogate.n_train > 0 {
            self.surrogate.n_train
        } else {
            (self.surrogate.oversample * self.basis().len() as f64).ceil() as usize
        }
    }

    pub fn mi_options(&self) -> Result<MiOptions> {
        let marginals = MarginalMode::parse(&self.gsa.marginals)
            .ok_or_else(|| cfg_err(format!("unknown gsa.marginals '{}'", self.gsa.marginals)))?;
        let measure = match self.gsa.measure.as_str() {
            "product" => EvalMeasure::Product,
            "joint" => EvalMeasure::JointPairs,
            m => return Err(cfg_err(format!("unknown gsa.measure '{m}'"))),
        };
        let o = MiOptions {
            n_kde: self.gsa.n_kde,
            m_mc: self.gsa.m_mc,
            grid: self.kde.grid,
            marginals,
            measure,
        };
        o.validate().map_err(|e| cfg_err(e.to_string()))?;
        Ok(o)
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        match self.cache.dir.as_str() {
            "" => Some(self.out.join("cache")),
            "none" => None,
            d => Some(PathBuf::from(d)),
        }
    }
}

fn quantize(x: f64) -> i128 {
    (x * 1e12).round() as i128
}

/// Hex SHA-256 of the solve inputs rounded to `1e-12`.
pub fn cache_key(params: &PoreParams, resolution: usize, tol: f64, ratio: f64) -> String {
    let text = format!(
        "poreuq-solve 1|{}|{}|{}|{}|{}|{}|{}",
        quantize(params.r),
        quantize(params.theta),
        quantize(params.d),
        quantize(params.l),
        resolution,
        quantize(tol),
        quantize(ratio)
    );
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Content-addressed store of forward-solve results. Entries are written
/// through a temporary file and renamed into place.
#[derive(Debug, Default)]
pub struct SolveCache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl SolveCache {
    pub fn new(dir: Option<PathBuf>) -> Result<Self> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir,
            ..Self::default()
        })
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn read(path: &Path) -> Option<EffectiveProps> {
        let text = fs::read_to_string(path).ok()?;
        let mut v = [0.0; 4];
        let mut lines = text.lines();
        if lines.next()? != "poreuq-solve 1" {
            return None;
        }
        for (slot, name) in v.iter_mut().zip(["dl", "dt", "geff", "porosity"]) {
            let (k, val) = lines.next()?.split_once(' ')?;
            if k != name {
                return None;
            }
            *slot = val.parse().ok()?;
        }
        Some(EffectiveProps {
            dl: v[0],
            dt: v[1],
            geff: v[2],
            porosity: v[3],
        })
    }

    fn write(dir: &Path, path: &Path, e: &EffectiveProps) -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        write!(
            tmp,
            "poreuq-solve 1\ndl {:?}\ndt {:?}\ngeff {:?}\nporosity {:?}\n",
            e.dl, e.dt, e.geff, e.porosity
        )?;
        tmp.persist(path).map(|_| ()).map_err(|e| e.error)
    }

    pub fn get_or_solve(&self, p: &PoreParams, solver: &SolverConfig) -> Result<EffectiveProps> {
        let Some(dir) = &self.dir else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return solver.solve(p);
        };
        let key = cache_key(p, solver.resolution, solver.tol, solver.diffusivity.tube_ratio);
        let path = dir.join(format!("{key}.txt"));
        if let Some(e) = Self::read(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(e);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let e = solver.solve(p)?;
        if let Err(err) = Self::write(dir, &path, &e) {
            log::warn!("could not cache solve {key}: {err}");
        }
        Ok(e)
    }
}

/// Everything a run produced, plus where it lives on disk.
#[derive(Debug)]
pub struct ResultsStore {
    pub dir: PathBuf,
    pub n_train: usize,
    pub failed: Vec<usize>,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub surrogates: Vec<PcSurrogate>,
    pub estimates: Vec<MiEstimate>,
    pub rankings: Vec<RankingRow>,
    pub sobol: Vec<(Qoi, [f64; 4])>,
    pub correlation: [[f64; 4]; 4],
    pub comparisons: Vec<(String, CramerResult)>,
}

impl ResultsStore {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn surrogate(&self, q: Qoi) -> Option<&PcSurrogate> {
        self.surrogates.iter().find(|s| s.qoi == q)
    }

    pub fn ranking(&self, q: Qoi) -> Option<&RankingRow> {
        self.rankings.iter().find(|r| r.qoi == q)
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Stage 1: training samples, written to `samples.csv`.
pub fn stage_sample(cfg: &RunConfig, model: &PriorModel, dir: &Path) -> Result<SampleBatch> {
    let batch = model.sample(cfg.n_train(), derive_seed(cfg.seed, "train"))?;
    let mut w = create(&dir.join("samples.csv"))?;
    batch.write_csv(&mut w)?;
    w.flush()?;
    Ok(batch)
}

/// Stage 2: forward solves, written to `solves.csv`. Fails when more than
/// [`MAX_FAILURE_RATE`] of them fail.
pub fn stage_solve(
    cfg: &RunConfig,
    batch: &SampleBatch,
    cache: &SolveCache,
    dir: &Path,
) -> Result<Vec<Option<EffectiveProps>>> {
    let solver = cfg.solver_config();
    let results = par::map_indexed(batch.len(), |k| cache.get_or_solve(&batch.theta[k], &solver));
    let mut w = create(&dir.join("solves.csv"))?;
    writeln!(w, "index,R,theta,d,l,DL,DT,geff,porosity,status")?;
    let mut failed = 0;
    let mut out = Vec::with_capacity(results.len());
    for (k, (p, r)) in batch.theta.iter().zip(results).enumerate() {
        match r {
            Ok(e) => {
                writeln!(
                    w,
                    "{k},{},{},{},{},{},{},{},{},ok",
                    p.r, p.theta, p.d, p.l, e.dl, e.dt, e.geff, e.porosity
                )?;
                out.push(Some(e));
            }
            Err(e) => {
                failed += 1;
                log::warn!("forward solve {k} failed: {e}");
                writeln!(w, "{k},{},{},{},{},,,,,{}", p.r, p.theta, p.d, p.l, e.kind())?;
                out.push(None);
            }
        }
    }
    w.flush()?;
    if failed as f64 > MAX_FAILURE_RATE * batch.len() as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: batch.len(),
        });
    }
    Ok(out)
}

/// Stage 3: one surrogate per QoI over the successful solves, written to
/// `surrogates/<qoi>.pce` and `surrogates/<qoi>_coefficients.csv`.
pub fn stage_fit(
    cfg: &RunConfig,
    batch: &SampleBatch,
    solves: &[Option<EffectiveProps>],
    dir: &Path,
) -> Result<Vec<PcSurrogate>> {
    let (zs, props): (Vec<_>, Vec<_>) = batch
        .z
        .iter()
        .zip(solves)
        .filter_map(|(z, s)| s.map(|s| (*z, s)))
        .unzip();
    let cols: Vec<(Qoi, Vec<f64>)> = Qoi::ALL
        .iter()
        .map(|&q| (q, props.iter().map(|p| q.of(p)).collect()))
        .collect();
    let responses: Vec<(Qoi, &[f64])> = cols.iter().map(|(q, v)| (*q, v.as_slice())).collect();
    let fits = fit_least_squares(&cfg.basis(), &zs, &responses)?;
    let sdir = dir.join("surrogates");
    fs::create_dir_all(&sdir)?;
    for s in &fits {
        fs::write(sdir.join(format!("{}.pce", s.qoi.name())), s.to_text())?;
        let mut w = create(&sdir.join(format!("{}_coefficients.csv", s.qoi.name())))?;
        s.write_coefficients_csv(&mut w)?;
        w.flush()?;
    }
    Ok(fits)
}

/// Reads `surrogates/<qoi>.pce` for every QoI.
pub fn load_surrogates(dir: &Path) -> Result<Vec<PcSurrogate>> {
    Qoi::ALL
        .iter()
        .map(|q| PcSurrogate::from_text(&fs::read_to_string(dir.join("surrogates").join(format!("{}.pce", q.name())))?))
        .collect()
}

const PAIRS: [(Qoi, Qoi); 3] = [(Qoi::Dl, Qoi::Dt), (Qoi::Dt, Qoi::Geff), (Qoi::Geff, Qoi::Dl)];

fn output<'a>(s: &'a MiSamples, q: Qoi) -> Result<&'a [f64]> {
    s.outputs
        .iter()
        .find(|(k, _)| *k == q)
        .map(|(_, v)| v.as_slice())
        .ok_or_else(|| Error::InvalidArgument(format!("no {} surrogate", q.name())))
}

/// Stage 4: QoI densities under the prior, written to `densities/`.
pub fn stage_density(cfg: &RunConfig, samples: &MiSamples, dir: &Path) -> Result<()> {
    let ddir = dir.join("densities");
    fs::create_dir_all(&ddir)?;
    for (q, g) in &samples.outputs {
        let h = density::isj_bandwidth(g)?;
        let grid = density::kde_1d(g, h.h, &density::padded_axis(g, h.h, cfg.kde.grid))?;
        let mut w = create(&ddir.join(format!("{}.csv", q.name())))?;
        grid.write_csv(&mut w)?;
        w.flush()?;
    }
    for (a, b) in PAIRS {
        let (xa, xb) = (output(samples, a)?, output(samples, b)?);
        let grid = gsa::joint_density(xa, xb, cfg.kde.grid)?;
        let mut w = create(&ddir.join(format!("{}_{}.csv", a.name(), b.name())))?;
        grid.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Prior draws shared by the density and sensitivity stages.
pub fn mi_samples(cfg: &RunConfig, model: &PriorModel, surrogates: &[PcSurrogate]) -> Result<MiSamples> {
    gsa::draw_mi_samples(surrogates, model, cfg.gsa.n_kde, derive_seed(cfg.seed, "mi"))
}

/// Output of the sensitivity stage.
pub struct GsaOutput {
    pub estimates: Vec<MiEstimate>,
    pub rankings: Vec<RankingRow>,
    pub sobol: Vec<(Qoi, [f64; 4])>,
    pub correlation: [[f64; 4]; 4],
}

/// Stage 5: mutual-information indices and rankings (`mi.csv`,
/// `trace.csv`), first-order Sobol' indices (`sobol.csv`) and the input
/// correlation matrix (`corr.csv`).
pub fn stage_gsa(
    cfg: &RunConfig,
    model: &PriorModel,
    surrogates: &[PcSurrogate],
    samples: &MiSamples,
    dir: &Path,
) -> Result<GsaOutput> {
    let opts = cfg.mi_options()?;
    let estimates = gsa::mi_table(samples, model, &Param::ALL, &opts, derive_seed(cfg.seed, "mi"))?;
    let rankings = Qoi::ALL
        .iter()
        .map(|&q| {
            let row: Vec<MiEstimate> = estimates.iter().filter(|e| e.qoi == q).cloned().collect();
            gsa::rank_effects(&row)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = create(&dir.join("mi.csv"))?;
    writeln!(w, "param,qoi,S_hat,std_error,r_hat,r_err_low,r_err_high,n_kde,m_mc,seed")?;
    for e in &estimates {
        let row = rankings.iter().find(|r| r.qoi == e.qoi).expect("ranking per qoi");
        let k = row.params.iter().position(|&p| p == e.param).expect("param in ranking");
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            e.param.name(),
            e.qoi.name(),
            e.s_hat,
            e.std_error,
            row.r_hat[k],
            row.r_hat[k] - row.r_low[k],
            row.r_high[k] - row.r_hat[k],
            opts.n_kde,
            opts.m_mc,
            cfg.seed
        )?;
    }
    w.flush()?;

    let mut w = create(&dir.join("trace.csv"))?;
    writeln!(w, "param,qoi,m,running_mean")?;
    for e in &estimates {
        for (k, v) in e.trace.iter().enumerate() {
            writeln!(w, "{},{},{},{}", e.param.name(), e.qoi.name(), k + 1, v)?;
        }
    }
    w.flush()?;

    let order = model.z_order();
    let mut sobol = Vec::new();
    let mut w = create(&dir.join("sobol.csv"))?;
    writeln!(w, "qoi,param,z_index,S1")?;
    for s in surrogates {
        let si = sobol_first_order(s)?;
        for (k, v) in si.iter().enumerate() {
            writeln!(w, "{},{},{},{}", s.qoi.name(), order[k].name(), k + 1, v)?;
        }
        sobol.push((s.qoi, si));
    }
    w.flush()?;

    let correlation = empirical_correlation(&samples.batch)?;
    let mut w = create(&dir.join("corr.csv"))?;
    writeln!(w, "param,R,theta,d,l")?;
    for (p, row) in Param::ALL.iter().zip(&correlation) {
        writeln!(w, "{},{},{},{},{}", p.name(), row[0], row[1], row[2], row[3])?;
    }
    w.flush()?;

    Ok(GsaOutput {
        estimates,
        rankings,
        sobol,
        correlation,
    })
}

/// Surrogate outputs for `n` fresh prior draws.
pub fn surrogate_draws(
    model: &PriorModel,
    surrogates: &[PcSurrogate],
    n: usize,
    seed: u64,
) -> Result<Vec<(Qoi, Vec<f64>)>> {
    let batch = model.sample(n, seed)?;
    Ok(surrogates.iter().map(|s| (s.qoi, s.eval_many(&batch.z))).collect())
}

/// Stage 6: Cramér tests of each QoI and QoI pair between two sets of
/// surrogates, written to `cramer.csv`.
pub fn stage_compare(
    cfg: &RunConfig,
    own: (&PriorModel, &[PcSurrogate]),
    reference: (&PriorModel, &[PcSurrogate]),
    dir: &Path,
) -> Result<Vec<(String, CramerResult)>> {
    let n = cfg.cramer.n;
    let x = surrogate_draws(own.0, own.1, n, derive_seed(cfg.seed, "cramer-own"))?;
    let y = surrogate_draws(reference.0, reference.1, n, derive_seed(cfg.seed, "cramer-ref"))?;
    let col = |set: &[(Qoi, Vec<f64>)], q: Qoi| -> Result<Vec<f64>> {
        set.iter()
            .find(|(k, _)| *k == q)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidArgument(format!("no {} surrogate", q.name())))
    };
    let interleave = |a: &[f64], b: &[f64]| a.iter().zip(b).flat_map(|(u, v)| [*u, *v]).collect::<Vec<f64>>();
    let mut out = Vec::new();
    for q in Qoi::ALL {
        let seed = derive_seed(cfg.seed, &format!("cramer/{}", q.name()));
        let (a, b) = (col(&x, q)?, col(&y, q)?);
        let r = cramer_test(Points::univariate(&a), Points::univariate(&b), cfg.cramer.confidence, cfg.cramer.resamples, seed)?;
        out.push((q.name().to_string(), r));
    }
    for (p, q) in PAIRS {
        let name = format!("({} {})", p.name(), q.name());
        let seed = derive_seed(cfg.seed, &format!("cramer/{name}"));
        let a = interleave(&col(&x, p)?, &col(&x, q)?);
        let b = interleave(&col(&y, p)?, &col(&y, q)?);
        let r = cramer_test(Points::new(2, &a)?, Points::new(2, &b)?, cfg.cramer.confidence, cfg.cramer.resamples, seed)?;
        out.push((name, r));
    }
    let mut w = create(&dir.join("cramer.csv"))?;
    writeln!(w, "variable,statistic,critical_value,confidence,p_value,decision,B,seed")?;
    for (name, r) in &out {
        writeln!(
            w,
            "{name},{},{},{},{},{},{},{}",
            r.statistic,
            r.critical_value,
            r.confidence,
            r.p_value,
            r.decision.name(),
            r.resamples,
            r.seed
        )?;
    }
    w.flush()?;
    Ok(out)
}

fn write_manifest(cfg: &RunConfig, dir: &Path, extra: &[(&str, String)]) -> Result<()> {
    let mut text = String::from("# poreuq run manifest\n");
    text.push_str(&format!("version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    text.push_str(&format!("parallel = {}\n", cfg!(feature = "parallel")));
    for (k, v) in extra {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str("\n[config]\n");
    // nest the echoed config under [config]
    let echoed = cfg.to_toml();
    for line in echoed.lines() {
        if let Some(section) = line.strip_prefix('[') {
            text.push_str(&format!("[config.{section}\n"));
        } else {
            text.push_str(line);
            text.push('\n');
        }
    }
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Sample, solve and fit one model into `dir`. Returns the surrogates as
/// read back from disk and the indices of failed solves.
pub fn train_model(cfg: &RunConfig, model: &PriorModel, cache: &SolveCache, dir: &Path) -> Result<(Vec<PcSurrogate>, Vec<usize>)> {
    let batch = stage_sample(cfg, model, dir)?;
    let solves = stage_solve(cfg, &batch, cache, dir)?;
    let failed = solves
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(k, _)| k)
        .collect();
    stage_fit(cfg, &batch, &solves, dir)?;
    Ok((load_surrogates(dir)?, failed))
}

/// Runs every stage. The reference model for the Cramér comparison is
/// trained under `<out>/reference/`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ResultsStore> {
    cfg.validate()?;
    par::with_jobs(cfg.jobs, || run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<ResultsStore> {
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir)?;
    let model = cfg.prior()?;
    let cache = SolveCache::new(cfg.cache_dir())?;

    let (surrogates, failed) = train_model(cfg, &model, &cache, &dir)?;
    let samples = mi_samples(cfg, &model, &surrogates)?;
    stage_density(cfg, &samples, &dir)?;
    let g = stage_gsa(cfg, &model, &surrogates, &samples, &dir)?;
    drop(samples);

    let comparisons = match cfg.reference_prior()? {
        Some(reference) => {
            let rdir = dir.join("reference");
            fs::create_dir_all(&rdir)?;
            let mut rcfg = cfg.clone();
            rcfg.model = reference.kind.name().to_ascii_lowercase();
            let (rsur, _) = train_model(&rcfg, &reference, &cache, &rdir)?;
            stage_compare(cfg, (&model, &surrogates), (&reference, &rsur), &dir)?
        }
        None => Vec::new(),
    };

    write_manifest(
        cfg,
        &dir,
        &[
            ("n_train", cfg.n_train().to_string()),
            ("failed_solves", failed.len().to_string()),
            ("cache_hits", cache.hits().to_string()),
            ("cache_misses", cache.misses().to_string()),
        ],
    )?;
    Ok(ResultsStore {
        dir,
        n_train: cfg.n_train(),
        failed,
        cache_hits: cache.hits(),
        cache_misses: cache.misses(),
        surrogates,
        estimates: g.estimates,
        rankings: g.rankings,
        sobol: g.sobol,
        correlation: g.correlation,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.n_train(), 1250);
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let cfg = RunConfig::from_toml_str(
            "model = \"p2\"\npreset = \"physical\"\nsolver.resolution = 96\ngsa.m_mc = 2000\nranges.R = [20.0, 40.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.solver.resolution, 96);
        assert_eq!(cfg.gsa.m_mc, 2000);
        assert_eq!(cfg.ranges().unwrap().r, Bounds::new(20.0, 40.0));
        assert!(RunConfig::from_toml_str("solver.resolutoin = 3").is_err());
        assert!(RunConfig::from_toml_str("gsa.n_kde = 10").is_err());
    }

    #[test]
    fn cache_key_granularity() {
        let p = PoreParams::new(30.0, 0.3, 6.0, 10.0);
        let k = cache_key(&p, 64, 1e-8, 1.0);
        assert_eq!(k, cache_key(&p, 64, 1e-8, 1.0));
        assert_ne!(k, cache_key(&PoreParams::new(30.0 + 1e-9, 0.3, 6.0, 10.0), 64, 1e-8, 1.0));
        assert_eq!(k, cache_key(&PoreParams::new(30.0 + 1e-14, 0.3, 6.0, 10.0), 64, 1e-8, 1.0));
        assert_ne!(k, cache_key(&p, 128, 1e-8, 1.0));
    }
}
