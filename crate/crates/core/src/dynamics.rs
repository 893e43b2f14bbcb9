// SPDX-License-Identifier: Apache-2.0

//! Lindblad dynamics of the four-level reduced model under rectangular pulses.
//!
//! The master equation is integrated with fixed-step RK4 in the interaction
//! picture of the (diagonal) bare Hamiltonian. The drive keeps its full
//! cos(2πft) form, so counter-rotating terms are retained. Reported density
//! matrices are transformed back to the lab frame.

use std::io::Write;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::ReducedModel;
use crate::error::{Error, Result};
use crate::nelder_mead::{minimize, NelderMeadOptions};

const INVARIANT_TOL: f64 = 1e-9;
/// Steps per period of the fastest frequency in the problem.
const STEPS_PER_PERIOD: f64 = 50.0;
/// Peaks below this fraction of the trace maximum are ignored.
const PEAK_FRACTION: f64 = 0.2;
const TIME_EPS: f64 = 1e-9;

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Relaxation and pure-dephasing times in seconds. An infinite time (`null`
/// in JSON) disables the channel. Omitted fields take the reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissipationParams {
    #[serde(with = "infinite_as_null")]
    pub t1_qubit: f64,
    #[serde(with = "infinite_as_null")]
    pub t1_ancilla: f64,
    #[serde(with = "infinite_as_null")]
    pub tphi_qubit: f64,
    #[serde(with = "infinite_as_null")]
    pub tphi_ancilla: f64,
}

impl Default for DissipationParams {
    fn default() -> Self {
        DissipationParams::reference()
    }
}

impl DissipationParams {
    pub fn none() -> Self {
        DissipationParams {
            t1_qubit: f64::INFINITY,
            t1_ancilla: f64::INFINITY,
            tphi_qubit: f64::INFINITY,
            tphi_ancilla: f64::INFINITY,
        }
    }

    /// T1 = 0.6 µs and a resonant Rabi decay time of 0.5 µs on both modes.
    pub fn reference() -> Self {
        DissipationParams::from_rabi_coherence(0.6e-6, 0.5e-6).expect("reference coherence times are consistent")
    }

    /// Both modes get `t1`, and a pure dephasing time chosen so that
    /// strongly driven Rabi oscillations decay with time constant `t2_rabi`.
    ///
    /// Under a resonant drive much faster than all rates the oscillation
    /// envelope decays at 3/(4 T1) + 1/(2 Tφ).
    pub fn from_rabi_coherence(t1: f64, t2_rabi: f64) -> Result<Self> {
        if !(t1 > 0.0 && t2_rabi > 0.0) {
            return Err(Error::domain("coherence times must be positive"));
        }
        let pure = 1.0 / t2_rabi - 0.75 / t1;
        if pure < 0.0 {
            return Err(Error::domain(format!(
                "a Rabi decay time of {t2_rabi:e} s is longer than T1 = {t1:e} s allows ({:e} s)",
                t1 / 0.75
            )));
        }
        let tphi = if pure == 0.0 { f64::INFINITY } else { 1.0 / (2.0 * pure) };
        Ok(DissipationParams {
            t1_qubit: t1,
            t1_ancilla: t1,
            tphi_qubit: tphi,
            tphi_ancilla: tphi,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t1_qubit", self.t1_qubit),
            ("t1_ancilla", self.t1_ancilla),
            ("tphi_qubit", self.tphi_qubit),
            ("tphi_ancilla", self.tphi_ancilla),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::domain(format!("{name} must be > 0 or infinite, got {v}")));
            }
        }
        Ok(())
    }

    /// Decay time of resonant qubit Rabi oscillations in the strong-drive
    /// limit (s); infinite when dissipation is off.
    pub fn qubit_rabi_decay(&self) -> f64 {
        1.0 / (0.75 / self.t1_qubit + 0.5 / self.tphi_qubit)
    }

    fn rates_per_ns(&self) -> Rates {
        let r = |t: f64| 1e-9 / t;
        Rates {
            relax: [r(self.t1_qubit), r(self.t1_ancilla)],
            dephase: [r(self.tphi_qubit), r(self.tphi_ancilla)],
        }
    }
}

struct Rates {
    relax: [f64; 2],
    dephase: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseTarget {
    Qubit,
    Ancilla,
    /// Recorded for completeness; has no effect on the state.
    Readout,
}

/// Rectangular pulse adding Ω·cos(2πft)·X_target to H/h while it is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub target: PulseTarget,
    pub frequency_ghz: f64,
    /// Resonant Rabi frequency Ω/2π (GHz).
    pub amplitude_ghz: f64,
    pub start_ns: f64,
    pub duration_ns: f64,
}

impl Pulse {
    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration_ns > 0.0 && self.duration_ns.is_finite()) {
            return Err(Error::domain(format!(
                "pulse duration must be > 0, got {}",
                self.duration_ns
            )));
        }
        if !(self.start_ns >= 0.0 && self.start_ns.is_finite()) {
            return Err(Error::domain(format!(
                "pulse start must be >= 0, got {}",
                self.start_ns
            )));
        }
        if !(self.frequency_ghz >= 0.0 && self.frequency_ghz.is_finite()) {
            return Err(Error::domain(format!(
                "carrier frequency must be >= 0, got {}",
                self.frequency_ghz
            )));
        }
        if !self.amplitude_ghz.is_finite() {
            return Err(Error::domain("pulse amplitude must be finite"));
        }
        Ok(())
    }
}

/// Non-overlapping pulses sorted by start time, followed by free evolution
/// up to `duration_ns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    duration_ns: f64,
}

impl PulseSequence {
    /// `duration_ns` defaults to the end of the last pulse.
    pub fn new(mut pulses: Vec<Pulse>, duration_ns: Option<f64>) -> Result<Self> {
        for p in &pulses {
            p.validate()?;
        }
        pulses.sort_by(|a, b| a.start_ns.total_cmp(&b.start_ns));
        for w in pulses.windows(2) {
            if w[1].start_ns < w[0].end_ns() - TIME_EPS {
                return Err(Error::domain(format!(
                    "pulses overlap: one ends at {} ns, the next starts at {} ns",
                    w[0].end_ns(),
                    w[1].start_ns
                )));
            }
        }
        let last = pulses.last().map_or(0.0, Pulse::end_ns);
        let duration_ns = duration_ns.unwrap_or(last);
        if !(duration_ns.is_finite() && duration_ns > 0.0) {
            return Err(Error::domain("sequence duration must be > 0"));
        }
        if duration_ns < last - TIME_EPS {
            return Err(Error::domain(format!(
                "sequence duration {duration_ns} ns ends before the last pulse ({last} ns)"
            )));
        }
        Ok(PulseSequence { pulses, duration_ns })
    }

    /// Conditioning pulse on the ancilla, then a spectroscopy pulse on the
    /// qubit, then an optional readout window.
    pub fn conditional(cond: &Pulse, spec: &Pulse, readout: Option<&Pulse>) -> Result<Self> {
        let mut pulses = vec![*cond, *spec];
        pulses.extend(readout.copied());
        PulseSequence::new(pulses, None)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn duration_ns(&self) -> f64 {
        self.duration_ns
    }

    fn boundaries(&self) -> Vec<f64> {
        self.pulses.iter().flat_map(|p| [p.start_ns, p.end_ns()]).collect()
    }
}

/// Mixed state of the reduced model, basis ordered like
/// [`crate::BASIS_LABELS`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    m: [[Complex64; 4]; 4],
}

impl DensityMatrix {
    pub fn pure(index: usize) -> Result<Self> {
        if index >= 4 {
            return Err(Error::domain(format!("basis index {index} out of range")));
        }
        let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
        m[index][index] = Complex64::new(1.0, 0.0);
        Ok(DensityMatrix { m })
    }

    pub fn ground() -> Self {
        DensityMatrix::pure(0).expect("index 0 is valid")
    }

    pub fn from_matrix(m: [[Complex64; 4]; 4]) -> Result<Self> {
        let rho = DensityMatrix { m };
        rho.check().map_err(Error::domain)?;
        Ok(rho)
    }

    pub fn element(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    pub fn populations(&self) -> [f64; 4] {
        [self.m[0][0].re, self.m[1][1].re, self.m[2][2].re, self.m[3][3].re]
    }

    /// P(|e,g⟩) + P(|e,e⟩).
    pub fn qubit_excited(&self) -> f64 {
        self.m[1][1].re + self.m[3][3].re
    }

    /// P(|g,e⟩) + P(|e,e⟩).
    pub fn ancilla_excited(&self) -> f64 {
        self.m[2][2].re + self.m[3][3].re
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.m[i][i]).sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.m[i][j] - self.m[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let a = Matrix4::from_fn(|i, j| 0.5 * (self.m[i][j] + self.m[j][i].conj()));
        a.symmetric_eigenvalues().min()
    }

    fn check(&self) -> std::result::Result<(), String> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > INVARIANT_TOL || tr.im.abs() > INVARIANT_TOL {
            return Err(format!("trace {tr} differs from 1"));
        }
        let asym = self.max_asymmetry();
        if asym > INVARIANT_TOL {
            return Err(format!("not Hermitian (max asymmetry {asym:e})"));
        }
        let low = self.min_eigenvalue();
        if low < -INVARIANT_TOL {
            return Err(format!("negative eigenvalue {low:e}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time_ns: f64,
    pub rho: DensityMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub dt_ns: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectories hold at least the initial state")
    }

    /// The sample at `t` (within a picosecond), if any.
    pub fn at(&self, time_ns: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| (s.time_ns - time_ns).abs() < 1e-3)
    }
}

/// Largest admissible step: 1/50 of the shortest period among the carriers
/// and the single-excitation lines of `m`.
pub fn max_time_step(m: &ReducedModel, seq: &PulseSequence) -> f64 {
    let e = m.energies();
    let lines = [e[1] - e[0], e[2] - e[0], e[3] - e[2], e[3] - e[1]];
    let f_max = seq
        .pulses
        .iter()
        .map(|p| p.frequency_ghz)
        .chain(lines.iter().map(|l| l.abs()))
        .fold(0.0, f64::max);
    1.0 / (STEPS_PER_PERIOD * f_max)
}

type Mat = [[Complex64; 4]; 4];

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Index pairs (lower, upper) connected by X on each mode.
const QUBIT_PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];
const ANCILLA_PAIRS: [(usize, usize); 2] = [(0, 2), (1, 3)];

struct Integrator {
    /// Angular frequencies 2πE_j (rad/ns), shifted to zero mean.
    omega: [f64; 4],
    /// Rate multiplying ρ_jk in the no-jump part of the dissipator.
    damp: [[f64; 4]; 4],
    relax: [f64; 2],
}

struct Drive {
    pairs: [(usize, usize); 2],
    amplitude: f64,
    angular: f64,
}

impl Integrator {
    fn new(m: &ReducedModel, diss: &DissipationParams) -> Self {
        let e = m.energies();
        let mean = e.iter().sum::<f64>() / 4.0;
        let omega = e.map(|x| 2.0 * std::f64::consts::PI * (x - mean));
        let rates = diss.rates_per_ns();
        let bit = |idx: usize, mode: usize| ((idx >> mode) & 1) as f64;
        let mut damp = [[0.0; 4]; 4];
        for (j, row) in damp.iter_mut().enumerate() {
            for (k, d) in row.iter_mut().enumerate() {
                for mode in 0..2 {
                    *d += 0.5 * rates.relax[mode] * (bit(j, mode) + bit(k, mode));
                    if bit(j, mode) != bit(k, mode) {
                        *d += rates.dephase[mode];
                    }
                }
            }
        }
        Integrator {
            omega,
            damp,
            relax: rates.relax,
        }
    }

    fn phases(&self, t: f64) -> [Complex64; 4] {
        self.omega.map(|w| Complex64::from_polar(1.0, w * t))
    }

    /// dρ̃/dt at time t in the interaction picture.
    fn derivative(&self, t: f64, drives: &[Drive], rho: &Mat, out: &mut Mat) {
        let p = self.phases(t);
        for j in 0..4 {
            for k in 0..4 {
                out[j][k] = -self.damp[j][k] * rho[j][k];
            }
        }
        // jumps: lowering on each mode sends index n to n - (1 << mode)
        for (mode, &gamma) in self.relax.iter().enumerate() {
            if gamma == 0.0 {
                continue;
            }
            let step = 1 << mode;
            let uppers: Vec<usize> = (0..4).filter(|n| (n >> mode) & 1 == 1).collect();
            for &n in &uppers {
                let ln = p[n - step] * p[n].conj();
                for &n2 in &uppers {
                    let ln2 = p[n2 - step] * p[n2].conj();
                    out[n - step][n2 - step] += gamma * rho[n][n2] * ln * ln2.conj();
                }
            }
        }
        // -2πi [H̃, ρ̃] for the drive part; the bare part is absorbed by the frame
        for d in drives {
            let c = d.amplitude * (d.angular * t).cos() * 2.0 * std::f64::consts::PI;
            for &(a, b) in &d.pairs {
                // H̃_ab = c e^{i(ω_a - ω_b)t}, H̃_ba = conj
                let h = c * p[a] * p[b].conj();
                let hc = h.conj();
                let mi = Complex64::new(0.0, -1.0);
                for k in 0..4 {
                    out[a][k] += mi * h * rho[b][k];
                    out[b][k] += mi * hc * rho[a][k];
                }
                for j in 0..4 {
                    out[j][b] -= mi * rho[j][a] * h;
                    out[j][a] -= mi * rho[j][b] * hc;
                }
            }
        }
    }

    fn rk4_step(&self, t: f64, h: f64, drives: &[Drive], rho: &mut Mat) {
        let mut k1 = [[ZERO; 4]; 4];
        let mut k2 = [[ZERO; 4]; 4];
        let mut k3 = [[ZERO; 4]; 4];
        let mut k4 = [[ZERO; 4]; 4];
        let mut tmp = [[ZERO; 4]; 4];
        let combine = |tmp: &mut Mat, base: &Mat, k: &Mat, s: f64| {
            for j in 0..4 {
                for l in 0..4 {
                    tmp[j][l] = base[j][l] + k[j][l] * s;
                }
            }
        };
        self.derivative(t, drives, rho, &mut k1);
        combine(&mut tmp, rho, &k1, 0.5 * h);
        self.derivative(t + 0.5 * h, drives, &tmp, &mut k2);
        combine(&mut tmp, rho, &k2, 0.5 * h);
        self.derivative(t + 0.5 * h, drives, &tmp, &mut k3);
        combine(&mut tmp, rho, &k3, h);
        self.derivative(t + h, drives, &tmp, &mut k4);
        for j in 0..4 {
            for l in 0..4 {
                rho[j][l] += (k1[j][l] + 2.0 * (k2[j][l] + k3[j][l]) + k4[j][l]) * (h / 6.0);
            }
        }
    }

    fn to_lab(&self, t: f64, rho: &Mat) -> DensityMatrix {
        let p = self.phases(t);
        let mut m = *rho;
        for j in 0..4 {
            for k in 0..4 {
                m[j][k] = rho[j][k] * p[j].conj() * p[k];
            }
        }
        DensityMatrix { m }
    }

    fn from_lab(&self, t: f64, rho: &DensityMatrix) -> Mat {
        let p = self.phases(t);
        let mut m = rho.m;
        for j in 0..4 {
            for k in 0..4 {
                m[j][k] = rho.m[j][k] * p[j] * p[k].conj();
            }
        }
        m
    }

    fn drives_at(seq: &PulseSequence, t: f64) -> Vec<Drive> {
        seq.pulses
            .iter()
            .filter(|p| p.target != PulseTarget::Readout && p.amplitude_ghz != 0.0)
            .filter(|p| p.start_ns <= t && t < p.end_ns())
            .map(|p| Drive {
                pairs: if p.target == PulseTarget::Qubit {
                    QUBIT_PAIRS
                } else {
                    ANCILLA_PAIRS
                },
                amplitude: p.amplitude_ghz,
                angular: 2.0 * std::f64::consts::PI * p.frequency_ghz,
            })
            .collect()
    }

    /// Integrate from t = 0 and record ρ at each of `times` (ascending).
    /// Steps never straddle a pulse edge or a sample time.
    fn run(&self, seq: &PulseSequence, rho0: &DensityMatrix, times: &[f64], dt: f64) -> Result<Vec<Sample>> {
        let mut stops: Vec<f64> = times.to_vec();
        stops.extend(seq.boundaries());
        stops.retain(|&t| t >= 0.0 && t <= times.last().copied().unwrap_or(0.0) + TIME_EPS);
        stops.sort_by(f64::total_cmp);
        stops.dedup_by(|a, b| (*a - *b).abs() < TIME_EPS);

        let mut rho = self.from_lab(0.0, rho0);
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        let mut next_sample = 0;
        let record = |t: f64, rho: &Mat, out: &mut Vec<Sample>, next: &mut usize| -> Result<()> {
            while *next < times.len() && (times[*next] - t).abs() < TIME_EPS {
                let lab = self.to_lab(t, rho);
                lab.check()
                    .map_err(|message| Error::InvariantViolation { time_ns: t, message })?;
                out.push(Sample {
                    time_ns: times[*next],
                    rho: lab,
                });
                *next += 1;
            }
            Ok(())
        };
        record(t, &rho, &mut out, &mut next_sample)?;
        for &stop in &stops {
            let span = stop - t;
            if span < TIME_EPS {
                continue;
            }
            let drives = Integrator::drives_at(seq, t + 0.5 * span);
            let n = (span / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for i in 0..n {
                self.rk4_step(t + i as f64 * h, h, &drives, &mut rho);
            }
            t = stop;
            record(t, &rho, &mut out, &mut next_sample)?;
        }
        Ok(out)
    }
}

fn check_dt(m: &ReducedModel, seq: &PulseSequence, dt_ns: f64) -> Result<()> {
    let max_dt_ns = max_time_step(m, seq);
    if !(dt_ns > 0.0) || dt_ns > max_dt_ns * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse { dt_ns, max_dt_ns });
    }
    Ok(())
}

/// Integrate the master equation over the whole sequence.
///
/// The trajectory holds ρ at t = 0, every whole nanosecond, every pulse edge
/// and the end of the sequence.
pub fn evolve(
    m: &ReducedModel,
    diss: &DissipationParams,
    seq: &PulseSequence,
    rho0: &DensityMatrix,
    dt_ns: f64,
) -> Result<Trajectory> {
    m.validate()?;
    diss.validate()?;
    check_dt(m, seq, dt_ns)?;
    rho0.check()
        .map_err(|message| Error::InvariantViolation { time_ns: 0.0, message })?;
    let end = seq.duration_ns;
    let mut times: Vec<f64> = (0..=end.floor() as usize).map(|i| i as f64).collect();
    times.extend(seq.boundaries());
    times.push(end);
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < TIME_EPS);
    let samples = Integrator::new(m, diss).run(seq, rho0, &times, dt_ns)?;
    Ok(Trajectory { samples, dt_ns })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroscopyOptions {
    pub conditioning_ns: f64,
    pub spectroscopy_ns: f64,
    pub spectroscopy_amp_ghz: f64,
    /// Integration step; the largest admissible one when unset.
    pub dt_ns: Option<f64>,
}

impl Default for SpectroscopyOptions {
    fn default() -> Self {
        SpectroscopyOptions {
            conditioning_ns: 10.0,
            spectroscopy_ns: 80.0,
            spectroscopy_amp_ghz: 0.006,
            dt_ns: None,
        }
    }
}

impl SpectroscopyOptions {
    /// Conditioning amplitude that leaves the ancilla half excited (a π/2
    /// rotation), where both conditional lines have equal weight.
    pub fn saturating_amplitude(&self) -> f64 {
        0.25 / self.conditioning_ns
    }

    /// Conditioning amplitude for a full π rotation of the ancilla.
    pub fn pi_amplitude(&self) -> f64 {
        0.5 / self.conditioning_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center_ghz: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyTrace {
    pub conditioning_amp_ghz: f64,
    pub fs_ghz: Vec<f64>,
    pub p_excited: Vec<f64>,
    pub peaks: Vec<Peak>,
    /// Set when the probe range does not contain both conditional lines.
    pub coverage_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSummary {
    pub conditioning_amp_ghz: f64,
    pub peaks: Vec<Peak>,
    pub separation_ghz: Option<f64>,
    pub coverage_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyResult {
    /// |g,g⟩→|e,g⟩ and |g,e⟩→|e,e⟩.
    pub expected_lines_ghz: [f64; 2],
    pub conditioning_freq_ghz: f64,
    pub traces: Vec<SpectroscopyTrace>,
}

impl SpectroscopyResult {
    pub fn summary(&self) -> Vec<PeakSummary> {
        self.traces
            .iter()
            .map(|t| PeakSummary {
                conditioning_amp_ghz: t.conditioning_amp_ghz,
                peaks: t.peaks.clone(),
                separation_ghz: (t.peaks.len() == 2).then(|| (t.peaks[1].center_ghz - t.peaks[0].center_ghz).abs()),
                coverage_warning: t.coverage_warning,
            })
            .collect()
    }

    /// CSV with columns fs_ghz, conditioning_amp_ghz, p_excited.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["fs_ghz", "conditioning_amp_ghz", "p_excited"])?;
        for t in &self.traces {
            for (f, p) in t.fs_ghz.iter().zip(&t.p_excited) {
                out.write_record([f.to_string(), t.conditioning_amp_ghz.to_string(), p.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Local maxima of `y` at or above a fraction of its maximum, located by a
/// parabola through each maximum and its neighbours.
pub fn find_peaks(x: &[f64], y: &[f64]) -> Vec<Peak> {
    let top = y.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 || x.len() < 3 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 1..x.len() - 1 {
        if !(y[i] >= y[i - 1] && y[i] > y[i + 1] && y[i] >= PEAK_FRACTION * top) {
            continue;
        }
        let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
        let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
        // Newton form y0 + d01 (x - x0) + a (x - x0)(x - x1)
        let d01 = (y1 - y0) / (x1 - x0);
        let a = ((y2 - y1) / (x2 - x1) - d01) / (x2 - x0);
        let (center, height) = if a < 0.0 {
            let c = (0.5 * (x0 + x1) - d01 / (2.0 * a)).clamp(x0, x2);
            (c, y0 + d01 * (c - x0) + a * (c - x0) * (c - x1))
        } else {
            (x1, y1)
        };
        peaks.push(Peak {
            center_ghz: center,
            height,
        });
    }
    peaks
}

/// Qubit excited population after a conditioning pulse on the ancilla line
/// followed by a spectroscopy pulse at each of `fs_ghz`, for every
/// conditioning amplitude.
pub fn conditional_spectroscopy(
    m: &ReducedModel,
    diss: &DissipationParams,
    fs_ghz: &[f64],
    conditioning_amps: &[f64],
    opts: &SpectroscopyOptions,
) -> Result<SpectroscopyResult> {
    m.validate()?;
    diss.validate()?;
    if fs_ghz.len() < 3 || conditioning_amps.is_empty() {
        return Err(Error::domain(
            "need at least 3 probe frequencies and one conditioning amplitude",
        ));
    }
    if fs_ghz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("probe frequencies must be strictly increasing"));
    }
    if !(opts.conditioning_ns > 0.0 && opts.spectroscopy_ns > 0.0) {
        return Err(Error::domain("pulse durations must be positive"));
    }
    let f_c = m.ancilla_line();
    let lines = [m.qubit_line(), m.conditional_qubit_line()];
    let template = |amp: f64, fs: f64| -> Result<PulseSequence> {
        let cond = Pulse {
            target: PulseTarget::Ancilla,
            frequency_ghz: f_c,
            amplitude_ghz: amp,
            start_ns: 0.0,
            duration_ns: opts.conditioning_ns,
        };
        let spec = Pulse {
            target: PulseTarget::Qubit,
            frequency_ghz: fs,
            amplitude_ghz: opts.spectroscopy_amp_ghz,
            start_ns: opts.conditioning_ns,
            duration_ns: opts.spectroscopy_ns,
        };
        PulseSequence::conditional(&cond, &spec, None)
    };
    let mut jobs = Vec::new();
    for &amp in conditioning_amps {
        for &fs in fs_ghz {
            let seq = template(amp, fs)?;
            let dt = opts.dt_ns.unwrap_or_else(|| max_time_step(m, &seq));
            check_dt(m, &seq, dt)?;
            jobs.push((seq, dt));
        }
    }
    let integ = Integrator::new(m, diss);
    let rho0 = DensityMatrix::ground();
    let results = crate::sweep::par_map(&jobs, |(seq, dt)| {
        integ
            .run(seq, &rho0, &[seq.duration_ns], *dt)
            .map(|s| s[0].rho.qubit_excited())
    });
    let mut values = results.into_iter();
    let lo = fs_ghz[0];
    let hi = fs_ghz[fs_ghz.len() - 1];
    let coverage_warning = lines.iter().any(|&l| l < lo || l > hi);
    let mut traces = Vec::with_capacity(conditioning_amps.len());
    for &amp in conditioning_amps {
        let p: Vec<f64> = values.by_ref().take(fs_ghz.len()).collect::<Result<_>>()?;
        traces.push(SpectroscopyTrace {
            conditioning_amp_ghz: amp,
            fs_ghz: fs_ghz.to_vec(),
            peaks: find_peaks(fs_ghz, &p),
            p_excited: p,
            coverage_warning,
        });
    }
    Ok(SpectroscopyResult {
        expected_lines_ghz: lines,
        conditioning_freq_ghz: f_c,
        traces,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    /// 1/e time of the oscillation envelope (ns); infinite when undamped.
    #[serde(with = "infinite_as_null")]
    pub decay_ns: f64,
    pub frequency_ghz: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTrace {
    pub amplitude_ghz: f64,
    pub drive_ghz: f64,
    pub durations_ns: Vec<f64>,
    pub p_excited: Vec<f64>,
    pub fit: Option<RabiFit>,
    /// "undamped" and/or "few_oscillations".
    pub flags: Vec<String>,
}

/// Least-squares offset and quadratures for a fixed decay rate and frequency.
fn project(t: &[f64], y: &[f64], gamma: f64, nu: f64) -> ([f64; 3], f64) {
    let basis = |ti: f64| {
        let env = (-gamma * ti).exp();
        let ph = 2.0 * std::f64::consts::PI * nu * ti;
        [1.0, env * ph.cos(), env * ph.sin()]
    };
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let b = nalgebra::Vector3::from(basis(ti));
        ata += b * b.transpose();
        aty += b * yi;
    }
    let coef = ata
        .cholesky()
        .map(|c| c.solve(&aty))
        .unwrap_or_else(nalgebra::Vector3::zeros);
    let ssr = t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let b = basis(ti);
            let r = yi - (coef[0] * b[0] + coef[1] * b[1] + coef[2] * b[2]);
            r * r
        })
        .sum();
    ([coef[0], coef[1], coef[2]], ssr)
}

/// Fit y = a + e^{-t/τ}(b cos 2πνt + c sin 2πνt), with the linear
/// coefficients projected out. Returns None when fewer than three
/// oscillations are visible.
pub fn fit_damped_oscillation(t: &[f64], y: &[f64]) -> Option<RabiFit> {
    if t.len() < 8 {
        return None;
    }
    let span = t[t.len() - 1] - t[0];
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let crossings = y.windows(2).filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0).count();
    let nu0 = crossings as f64 / (2.0 * span);
    if !(span > 0.0) || nu0 * span < 3.0 {
        return None;
    }
    // coarse scan in frequency, then a joint simplex refinement
    let best_nu = (0..=200)
        .map(|i| nu0 * (0.8 + 0.4 * i as f64 / 200.0))
        .min_by(|a, b| project(t, y, 0.0, *a).1.total_cmp(&project(t, y, 0.0, *b).1))
        .unwrap_or(nu0);
    let objective = |x: &[f64]| project(t, y, x[1] / span, x[0] * nu0).1;
    let opts = NelderMeadOptions {
        max_evals: 4000,
        x_tol: 1e-10,
        restarts: 2,
    };
    let x0 = [best_nu / nu0, 1.0];
    let m = minimize(objective, &x0, &[0.01, 0.5], &[0.5, 0.0], &[2.0, 1e3], &opts);
    let gamma = m.x[1] / span;
    let nu = m.x[0] * nu0;
    let (coef, ssr) = project(t, y, gamma, nu);
    Some(RabiFit {
        decay_ns: if gamma > 0.0 { 1.0 / gamma } else { f64::INFINITY },
        frequency_ghz: nu,
        offset: coef[0],
        amplitude: coef[1].hypot(coef[2]),
        rms_residual: (ssr / t.len() as f64).sqrt(),
    })
}

/// Qubit excited population under a resonant drive of Rabi frequency
/// `amp_ghz` on the qubit line, sampled at each of `durations_ns`.
pub fn rabi_trace(
    m: &ReducedModel,
    diss: &DissipationParams,
    amp_ghz: f64,
    durations_ns: &[f64],
    dt_ns: Option<f64>,
) -> Result<RabiTrace> {
    m.validate()?;
    diss.validate()?;
    if durations_ns.is_empty() {
        return Err(Error::domain("no pulse durations given"));
    }
    if durations_ns.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::domain("pulse durations must be finite and >= 0"));
    }
    if !(amp_ghz > 0.0 && amp_ghz.is_finite()) {
        return Err(Error::domain(format!("Rabi amplitude must be > 0, got {amp_ghz}")));
    }
    let mut times = durations_ns.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < TIME_EPS);
    let longest = times[times.len() - 1].max(TIME_EPS);
    let drive = m.qubit_line();
    let seq = PulseSequence::new(
        vec![Pulse {
            target: PulseTarget::Qubit,
            frequency_ghz: drive,
            amplitude_ghz: amp_ghz,
            start_ns: 0.0,
            duration_ns: longest,
        }],
        None,
    )?;
    let dt = dt_ns.unwrap_or_else(|| max_time_step(m, &seq));
    check_dt(m, &seq, dt)?;
    let samples = Integrator::new(m, diss).run(&seq, &DensityMatrix::ground(), &times, dt)?;
    let p_sorted: Vec<f64> = samples.iter().map(|s| s.rho.qubit_excited()).collect();
    let p_excited = durations_ns
        .iter()
        .map(|d| {
            let i = times.partition_point(|t| *t < d - TIME_EPS);
            p_sorted[i]
        })
        .collect();
    let fit = fit_damped_oscillation(&times, &p_sorted);
    let mut flags = Vec::new();
    match &fit {
        None => flags.push("few_oscillations".to_string()),
        Some(f) if f.decay_ns > 100.0 * (longest - times[0]) => flags.push("undamped".to_string()),
        Some(_) => {}
    }
    Ok(RabiTrace {
        amplitude_ghz: amp_ghz,
        drive_ghz: drive,
        durations_ns: durations_ns.to_vec(),
        p_excited,
        fit,
        flags,
    })
}
