//! Ground-truth signal generator: band-concentrated AR(2) carriers,
//! amplitude-modulated by VAR-driven step functions, mixed into two
//! channels with additive noise at a target signal-to-noise ratio.
//! Causal links are injected through the modulator levels, within band
//! or across bands, so that every directed link has a known ground truth.

use crate::error::{Result, SteError};
use crate::seed::{label, rng_for};
use crate::signal::{BandSpec, TimeSeries};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// AR(2) carrier with a spectral peak at `freq`:
/// phi1 = 2 rho_c cos(2 pi f / fs), phi2 = -rho_c^2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandOscillatorSpec {
    pub band: BandSpec,
    pub fs: f64,
    /// pole modulus, in (0,1) for a sharp peak; 0 degenerates to white noise
    pub rho_c: f64,
    /// peak frequency in Hz, inside the band
    pub freq: f64,
    pub innov_var: f64,
}

impl BandOscillatorSpec {
    /// Default carrier for a band: peak at the band midpoint, rho_c = 0.98.
    pub fn for_band(band: BandSpec, fs: f64) -> BandOscillatorSpec {
        BandOscillatorSpec {
            freq: 0.5 * (band.lo + band.hi),
            band,
            fs,
            rho_c: 0.995,
            innov_var: 1.0,
        }
    }
}

/// Positivity transform from latent VAR levels to amplitudes.
/// `Exp` is the default: it is monotone (no dependence lost to sign
/// folding) and gives the amplitude a wide dynamic range, so the block
/// maxima track the modulator well against the carrier's own envelope
/// noise. `AbsOffset` folds the level magnitude and shifts it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelTransform {
    Exp,
    AbsOffset,
}

/// Step-function modulator pair: interval lengths i.i.d. discrete uniform
/// on {eta_lo..=eta_hi}, levels from a bivariate VAR(1), passed through a
/// positivity transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModulatorSpec {
    /// var_coeffs[target][source]; component 0 is X's levels, 1 is Y's
    pub var_coeffs: [[f64; 2]; 2],
    /// innovation SD per component; a causally driven component keeps its
    /// own noise small so the cross term dominates its levels
    pub innov_sd: [f64; 2],
    pub eta_lo: usize,
    pub eta_hi: usize,
    pub transform: LevelTransform,
    /// offset of the AbsOffset transform (ignored by Exp)
    pub level_offset: f64,
}

impl ModulatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eta_lo == 0 || self.eta_lo > self.eta_hi {
            return Err(SteError::Config(format!(
                "interval support {{{}..{}}} invalid",
                self.eta_lo, self.eta_hi
            )));
        }
        let a = &self.var_coeffs;
        let tr = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = tr * tr - 4.0 * det;
        let radius = if disc >= 0.0 {
            let s = disc.sqrt();
            ((tr + s) / 2.0).abs().max(((tr - s) / 2.0).abs())
        } else {
            det.abs().sqrt()
        };
        if radius >= 1.0 {
            return Err(SteError::Config(format!(
                "modulator VAR spectral radius {radius} >= 1"
            )));
        }
        if self.innov_sd.iter().any(|&s| !(s > 0.0)) {
            return Err(SteError::Config("innovation SDs must be positive".into()));
        }
        Ok(())
    }

    fn diagonal(own: f64, eta: (usize, usize)) -> ModulatorSpec {
        ModulatorSpec {
            var_coeffs: [[own, 0.0], [0.0, own]],
            innov_sd: [1.0, 1.0],
            eta_lo: eta.0,
            eta_hi: eta.1,
            transform: LevelTransform::Exp,
            level_offset: 0.1,
        }
    }
}

/// Channel identifier within a generated pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    X,
    Y,
}

/// One directed causal link between oscillatory components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from_channel: Channel,
    pub from_band: String,
    pub to_channel: Channel,
    pub to_band: String,
    pub feedback: bool,
}

impl Link {
    pub fn one_way(from: Channel, from_band: &str, to: Channel, to_band: &str) -> Link {
        Link {
            from_channel: from,
            from_band: from_band.into(),
            to_channel: to,
            to_band: to_band.into(),
            feedback: false,
        }
    }

    pub fn feedback(band: &str) -> Link {
        Link {
            from_channel: Channel::X,
            from_band: band.into(),
            to_channel: Channel::Y,
            to_band: band.into(),
            feedback: true,
        }
    }
}

/// Directed links across the oscillatory components of the two channels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalTopology {
    pub links: Vec<Link>,
}

impl CausalTopology {
    /// Default topology: theta X->Y, alpha feedback, beta Y->X,
    /// delta Y->X, gamma X->Y, plus the cross-band links theta->gamma
    /// (X->Y) and beta->delta (Y->X).
    pub fn default_eight_links() -> CausalTopology {
        CausalTopology {
            links: vec![
                Link::one_way(Channel::X, "theta", Channel::Y, "theta"),
                Link::feedback("alpha"),
                Link::one_way(Channel::Y, "beta", Channel::X, "beta"),
                Link::one_way(Channel::Y, "delta", Channel::X, "delta"),
                Link::one_way(Channel::X, "gamma", Channel::Y, "gamma"),
                Link::one_way(Channel::X, "theta", Channel::Y, "gamma"),
                Link::one_way(Channel::Y, "beta", Channel::X, "delta"),
            ],
        }
    }

    /// Single within-band link, everything else silent.
    pub fn single_link(from: Channel, to: Channel, band: &str) -> CausalTopology {
        CausalTopology {
            links: vec![Link::one_way(from, band, to, band)],
        }
    }

    pub fn empty() -> CausalTopology {
        CausalTopology { links: vec![] }
    }

    fn validate(&self, band_names: &[&str]) -> Result<()> {
        for l in &self.links {
            for b in [&l.from_band, &l.to_band] {
                if !band_names.contains(&b.as_str()) {
                    return Err(SteError::Config(format!("link references unknown band {b}")));
                }
            }
            if l.feedback && (l.from_band != l.to_band || l.from_channel == l.to_channel) {
                return Err(SteError::Config("feedback links must be within-band across channels".into()));
            }
            if !l.feedback && l.from_channel == l.to_channel {
                return Err(SteError::Config("links must cross channels".into()));
            }
        }
        Ok(())
    }
}

/// Mixing weights over the per-band components plus the noise level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixSpec {
    /// one weight per band, positive, summing to 1
    pub weights: Vec<f64>,
    /// var(signal)/var(signal+noise)
    pub target_snr: f64,
}

impl MixSpec {
    pub fn default_for(n_bands: usize) -> MixSpec {
        MixSpec {
            weights: vec![1.0 / n_bands as f64; n_bands],
            target_snr: 0.95,
        }
    }

    pub fn validate(&self, n_bands: usize) -> Result<()> {
        if self.weights.len() != n_bands {
            return Err(SteError::Config(format!(
                "{} mixing weights for {n_bands} bands",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(SteError::Config("mixing weights must be non-negative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(SteError::Config(format!("mixing weights sum to {s}, not 1")));
        }
        if !(0.0 < self.target_snr && self.target_snr <= 1.0) {
            return Err(SteError::Config("target SNR must lie in (0,1]".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut impl Rng, normal: &Normal) -> f64 {
    normal.inverse_cdf(rng.gen_range(1e-12..1.0))
}

/// Stationary AR(2) carrier with the band's spectral peak; burn-in of 1000
/// samples discarded, output rescaled to unit variance.
pub fn gen_carrier(spec: &BandOscillatorSpec, n: usize, seed: u64) -> Result<TimeSeries> {
    let fs = spec.fs;
    if !(0.0..1.0).contains(&spec.rho_c) {
        return Err(SteError::Config(format!("carrier modulus {} outside [0,1)", spec.rho_c)));
    }
    if spec.rho_c > 0.0 && !(spec.band.lo <= spec.freq && spec.freq <= spec.band.hi) {
        return Err(SteError::Config(format!(
            "carrier peak {} Hz outside band [{}, {}]",
            spec.freq, spec.band.lo, spec.band.hi
        )));
    }
    let phi1 = 2.0 * spec.rho_c * (2.0 * std::f64::consts::PI * spec.freq / fs).cos();
    let phi2 = -spec.rho_c * spec.rho_c;
    let sd = spec.innov_var.sqrt();
    let mut rng = rng_for(seed, &[label("carrier"), label(&spec.band.name)]);
    let normal = Normal::new(0.0, 1.0).map_err(|e| SteError::Numerical(e.to_string()))?;
    let burn = 1000;
    let mut prev1 = 0.0;
    let mut prev2 = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..(burn + n) {
        let v = phi1 * prev1 + phi2 * prev2 + sd * gaussian(&mut rng, &normal);
        prev2 = prev1;
        prev1 = v;
        if t >= burn {
            out.push(v);
        }
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(SteError::Numerical("degenerate carrier variance".into()));
    }
    let scale = var.sqrt();
    for v in &mut out {
        *v = (*v - mean) / scale;
    }
    Ok(TimeSeries::new(out, fs, &format!("carrier_{}", spec.band.name))?)
}

/// Step-function amplitude modulators for the two channels with their
/// latent VAR levels and interval boundaries.
#[derive(Debug, Clone)]
pub struct Modulators {
    pub a_x: Vec<f64>,
    pub a_y: Vec<f64>,
    pub levels_x: Vec<f64>,
    pub levels_y: Vec<f64>,
    /// cumulative interval end points (exclusive), one per level used
    pub boundaries_x: Vec<usize>,
    pub boundaries_y: Vec<usize>,
}

fn draw_intervals(rng: &mut impl Rng, lo: usize, hi: usize, n: usize) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut total = 0;
    while total < n {
        total += rng.gen_range(lo..=hi);
        ends.push(total.min(n));
    }
    ends
}

/// Generate the modulator pair. Interval lengths are independent between
/// the channels; the levels are VAR(1)-coupled by interval index.
/// `driver`: optional external level sequence whose magnitude is added
/// (scaled by `driver_gain`) to Y's level equation — used for cross-band
/// links.
pub fn gen_modulators_driven(
    spec: &ModulatorSpec,
    n: usize,
    seed: u64,
    driver: Option<(&[f64], f64)>,
) -> Result<Modulators> {
    spec.validate()?;
    let mut rng = rng_for(seed, &[label("modulator")]);
    let normal = Normal::new(0.0, 1.0).map_err(|e| SteError::Numerical(e.to_string()))?;
    let boundaries_x = draw_intervals(&mut rng, spec.eta_lo, spec.eta_hi, n);
    let boundaries_y = draw_intervals(&mut rng, spec.eta_lo, spec.eta_hi, n);
    let n_levels = boundaries_x.len().max(boundaries_y.len());
    let a = &spec.var_coeffs;
    let mut lx = Vec::with_capacity(n_levels);
    let mut ly = Vec::with_capacity(n_levels);
    let mut prev = [0.0, 0.0];
    // burn-in so levels start from the stationary distribution
    for b in 0..(50 + n_levels) {
        let ex = spec.innov_sd[0] * gaussian(&mut rng, &normal);
        let ey = spec.innov_sd[1] * gaussian(&mut rng, &normal);
        let drive = driver
            .map(|(d, gain)| if d.is_empty() { 0.0 } else { gain * d[b % d.len()].abs() })
            .unwrap_or(0.0);
        let vx = a[0][0] * prev[0] + a[0][1] * prev[1] + ex;
        let vy = a[1][0] * prev[0] + a[1][1] * prev[1] + ey + drive;
        prev = [vx, vy];
        if b >= 50 {
            lx.push(vx);
            ly.push(vy);
        }
    }
    let amp = |l: f64| match spec.transform {
        LevelTransform::Exp => l.exp(),
        LevelTransform::AbsOffset => l.abs() + spec.level_offset,
    };
    let step = |bounds: &[usize], levels: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        for (b, &end) in bounds.iter().enumerate() {
            for _ in start..end {
                out.push(amp(levels[b]));
            }
            start = end;
        }
        out
    };
    let a_x = step(&boundaries_x, &lx);
    let a_y = step(&boundaries_y, &ly);
    Ok(Modulators {
        a_x,
        a_y,
        levels_x: lx[..boundaries_x.len()].to_vec(),
        levels_y: ly[..boundaries_y.len()].to_vec(),
        boundaries_x,
        boundaries_y,
    })
}

pub fn gen_modulators(spec: &ModulatorSpec, n: usize, seed: u64) -> Result<Modulators> {
    gen_modulators_driven(spec, n, seed, None)
}

/// Everything needed to reproduce one generated channel pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub links: Vec<Link>,
    pub fs: f64,
    pub n_seconds: f64,
    pub snr_x: f64,
    pub snr_y: f64,
    pub seed: u64,
}

/// Full generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairConfig {
    pub bands: Vec<BandSpec>,
    pub oscillators: Vec<BandOscillatorSpec>,
    pub topology: CausalTopology,
    pub mix: MixSpec,
    /// own-level persistence and causal cross-coefficient of the level VAR
    pub own_coeff: f64,
    pub cross_coeff: f64,
    pub innov_sd: f64,
    /// innovation-SD multiplier for the driven component of a causal
    /// link: small values make the cross term dominate the target levels
    pub target_innov_frac: f64,
    pub transform: LevelTransform,
    pub eta: (usize, usize),
    pub level_offset: f64,
    pub n_seconds: f64,
    pub fs: f64,
}

impl PairConfig {
    pub fn default_with(topology: CausalTopology, n_seconds: f64) -> PairConfig {
        let fs = 128.0;
        let bands = BandSpec::all_presets();
        let oscillators = bands.iter().map(|b| BandOscillatorSpec::for_band(b.clone(), fs)).collect();
        PairConfig {
            mix: MixSpec::default_for(bands.len()),
            bands,
            oscillators,
            topology,
            own_coeff: 0.2,
            cross_coeff: 2.0,
            innov_sd: 0.75,
            target_innov_frac: 0.1,
            transform: LevelTransform::Exp,
            eta: (31, 33),
            level_offset: 0.1,
            n_seconds,
            fs,
        }
    }
}

/// Generate one (X, Y) channel pair under the configured causal topology.
pub fn gen_channel_pair(cfg: &PairConfig, seed: u64) -> Result<(TimeSeries, TimeSeries, GroundTruth)> {
    let band_names: Vec<&str> = cfg.bands.iter().map(|b| b.name.as_str()).collect();
    cfg.topology.validate(&band_names)?;
    cfg.mix.validate(cfg.bands.len())?;
    if cfg.oscillators.len() != cfg.bands.len() {
        return Err(SteError::Config("one oscillator spec per band required".into()));
    }
    let n = (cfg.n_seconds * cfg.fs).round() as usize;
    if n == 0 {
        return Err(SteError::Config("empty signal requested".into()));
    }

    // per-band level VAR: direction decides where the cross-coefficient goes
    let mut zx = vec![0.0; n];
    let mut zy = vec![0.0; n];
    let mut z_per_band: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(cfg.bands.len());
    let mut theta_levels_by_band: Vec<Vec<f64>> = Vec::with_capacity(cfg.bands.len());

    // first pass: generate carriers and the within-band modulators
    let mut mods: Vec<Modulators> = Vec::with_capacity(cfg.bands.len());
    for (bi, band) in cfg.bands.iter().enumerate() {
        let o = &cfg.oscillators[bi];
        let within: Vec<&Link> = cfg
            .topology
            .links
            .iter()
            .filter(|l| l.from_band == band.name && l.to_band == band.name)
            .collect();
        let mut coeffs = [[cfg.own_coeff, 0.0], [0.0, cfg.own_coeff]];
        let mut sds = [cfg.innov_sd, cfg.innov_sd];
        for l in &within {
            if l.feedback {
                // symmetric coupling: eigenvalues are own +- cross, so the
                // feedback coefficient is capped to keep the VAR stationary
                let fb = cfg.cross_coeff.min(0.95 - cfg.own_coeff);
                coeffs[0][1] = fb;
                coeffs[1][0] = fb;
            } else {
                match l.from_channel {
                    Channel::X => {
                        coeffs[1][0] = cfg.cross_coeff;
                        sds[1] = cfg.innov_sd * cfg.target_innov_frac;
                    }
                    Channel::Y => {
                        coeffs[0][1] = cfg.cross_coeff;
                        sds[0] = cfg.innov_sd * cfg.target_innov_frac;
                    }
                }
            }
        }
        let spec = ModulatorSpec {
            var_coeffs: coeffs,
            innov_sd: sds,
            eta_lo: cfg.eta.0,
            eta_hi: cfg.eta.1,
            transform: cfg.transform,
            level_offset: cfg.level_offset,
        };
        let m = gen_modulators(&spec, n, crate::seed::derive(seed, &[label("mod"), bi as u64]))?;
        theta_levels_by_band.push(m.levels_x.clone());
        mods.push(m);
        let _ = o;
    }

    // second pass: apply cross-band links by re-generating the target
    // channel's modulator with the source levels as an external driver
    for l in &cfg.topology.links {
        if l.from_band == l.to_band {
            continue;
        }
        let src_bi = band_names.iter().position(|&b| b == l.from_band).unwrap();
        let dst_bi = band_names.iter().position(|&b| b == l.to_band).unwrap();
        let src_levels = match l.from_channel {
            Channel::X => mods[src_bi].levels_x.clone(),
            Channel::Y => mods[src_bi].levels_y.clone(),
        };
        let spec = ModulatorSpec {
            innov_sd: [cfg.innov_sd, cfg.innov_sd * cfg.target_innov_frac],
            transform: cfg.transform,
            level_offset: cfg.level_offset,
            ..ModulatorSpec::diagonal(cfg.own_coeff, cfg.eta)
        };
        let driven = gen_modulators_driven(
            &spec,
            n,
            crate::seed::derive(seed, &[label("xmod"), dst_bi as u64]),
            Some((&src_levels, cfg.cross_coeff)),
        )?;
        // only the target channel's modulator is replaced
        match l.to_channel {
            Channel::X => {
                // the driven generator couples into component Y; swap roles
                mods[dst_bi].a_x = driven.a_y;
                mods[dst_bi].levels_x = driven.levels_y;
                mods[dst_bi].boundaries_x = driven.boundaries_y;
            }
            Channel::Y => {
                mods[dst_bi].a_y = driven.a_y;
                mods[dst_bi].levels_y = driven.levels_y;
                mods[dst_bi].boundaries_y = driven.boundaries_y;
            }
        }
    }

    // third pass: carriers, band components, mixing
    for (bi, band) in cfg.bands.iter().enumerate() {
        let o = &cfg.oscillators[bi];
        let cx = gen_carrier(o, n, crate::seed::derive(seed, &[label("car_x"), bi as u64]))?;
        let cy = gen_carrier(o, n, crate::seed::derive(seed, &[label("car_y"), bi as u64]))?;
        let m = &mods[bi];
        let bx: Vec<f64> = (0..n).map(|t| m.a_x[t] * cx.values[t]).collect();
        let by: Vec<f64> = (0..n).map(|t| m.a_y[t] * cy.values[t]).collect();
        let w = cfg.mix.weights[bi];
        for t in 0..n {
            zx[t] += w * bx[t];
            zy[t] += w * by[t];
        }
        z_per_band.push((bx, by));
        let _ = band;
    }

    // additive Gaussian noise scaled to the target SNR
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    };
    let snr = cfg.mix.target_snr;
    let mut rng = rng_for(seed, &[label("noise")]);
    let normal = Normal::new(0.0, 1.0).map_err(|e| SteError::Numerical(e.to_string()))?;
    let mut apply_noise = |sig: &mut [f64]| -> f64 {
        let vs = var(sig);
        let vn = vs * (1.0 - snr) / snr;
        let sd = vn.sqrt();
        for v in sig.iter_mut() {
            *v += sd * gaussian(&mut rng, &normal);
        }
        vs / (vs + vn)
    };
    let snr_x = apply_noise(&mut zx);
    let snr_y = apply_noise(&mut zy);

    let truth = GroundTruth {
        links: cfg.topology.links.clone(),
        fs: cfg.fs,
        n_seconds: cfg.n_seconds,
        snr_x,
        snr_y,
        seed,
    };
    Ok((
        TimeSeries::new(zx, cfg.fs, "X")?,
        TimeSeries::new(zy, cfg.fs, "Y")?,
        truth,
    ))
}

/// Periodogram of a real series at Fourier frequencies 1..n/2 (Hz paired).
pub fn periodogram(v: &[f64], fs: f64) -> Vec<(f64, f64)> {
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n / 2);
    for k in 1..=(n / 2) {
        let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &x) in v.iter().enumerate() {
            let ph = w * t as f64;
            re += (x - mean) * ph.cos();
            im -= (x - mean) * ph.sin();
        }
        out.push((k as f64 * fs / n as f64, (re * re + im * im) / n as f64));
    }
    out
}
