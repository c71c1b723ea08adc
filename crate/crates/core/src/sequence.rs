//! The DEER timeline: a Hahn echo on the NV with one radical drive window
//! in each echo half.
//!
//! `tau_ns` is the free-evolution time of ONE echo half. The NV π/2 pulse
//! sits at t = 0, the π pulse at t = τ and the final π/2 pulse at t = 2τ,
//! so a full sequence lasts 2τ. Each drive window opens
//! `offset_after_nv_pulse_ns` after the preceding NV pulse and must close
//! before the next one: Tₛ + offset ≤ τ.
//!
//! NV pulses are ideal and carry zero duration.

use serde::{Deserialize, Serialize};

use crate::error::{DeerError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DrivePulse {
    /// Rectangular drive of amplitude Ω lasting Tₛ.
    #[default]
    Finite,
    /// Ideal instantaneous π flip of every target at the window start.
    InstantaneousPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Radical Rabi frequency Ω, MHz.
    pub rabi_mhz: f64,
    /// Drive frequency minus nominal target resonance, MHz.
    pub frequency_offset_mhz: f64,
    /// Window duration Tₛ, ns.
    pub duration_ns: f64,
    pub offset_after_nv_pulse_ns: f64,
    #[serde(default)]
    pub pulse: DrivePulse,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            rabi_mhz: 5.0,
            frequency_offset_mhz: 0.0,
            duration_ns: 100.0,
            offset_after_nv_pulse_ns: 0.0,
            pulse: DrivePulse::Finite,
        }
    }
}

impl DriveParams {
    pub fn instantaneous(offset_after_nv_pulse_ns: f64) -> Self {
        Self {
            rabi_mhz: 0.0,
            frequency_offset_mhz: 0.0,
            duration_ns: 0.0,
            offset_after_nv_pulse_ns,
            pulse: DrivePulse::InstantaneousPi,
        }
    }

    /// Time the window occupies inside its echo half.
    pub fn window_ns(&self) -> f64 {
        match self.pulse {
            DrivePulse::Finite => self.duration_ns,
            DrivePulse::InstantaneousPi => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.rabi_mhz >= 0.0) || !self.rabi_mhz.is_finite() {
            bad.push(format!("rabi must be >= 0 MHz, got {}", self.rabi_mhz));
        }
        if !(self.duration_ns >= 0.0) || !self.duration_ns.is_finite() {
            bad.push(format!("drive duration must be >= 0 ns, got {}", self.duration_ns));
        }
        if !(self.offset_after_nv_pulse_ns >= 0.0) || !self.offset_after_nv_pulse_ns.is_finite() {
            bad.push(format!("drive offset must be >= 0 ns, got {}", self.offset_after_nv_pulse_ns));
        }
        if !self.frequency_offset_mhz.is_finite() {
            bad.push("frequency offset must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DeerError::Parameter(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "phase_deg")]
pub enum NvAction {
    None,
    HalfPulseX,
    /// π/2 about an in-plane axis at the given phase (0° = +x).
    HalfPulsePhase(f64),
    PiPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadicalAction {
    Off,
    Drive,
    InstantPi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_ns: f64,
    pub nv_action: NvAction,
    pub radical: RadicalAction,
}

impl Segment {
    fn pulse(action: NvAction) -> Self {
        Self { duration_ns: 0.0, nv_action: action, radical: RadicalAction::Off }
    }

    fn evolve(duration_ns: f64, radical: RadicalAction) -> Self {
        Self { duration_ns, nv_action: NvAction::None, radical }
    }

    pub fn is_nv_pulse(&self) -> bool {
        !matches!(self.nv_action, NvAction::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeerTimeline {
    pub segments: Vec<Segment>,
    /// Free evolution per echo half, ns.
    pub tau_ns: f64,
    pub readout_phase_deg: f64,
}

impl DeerTimeline {
    pub fn total_duration_ns(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_ns).sum()
    }

    pub fn drive_on_ns(&self) -> f64 {
        self.segments.iter().filter(|s| s.radical == RadicalAction::Drive).map(|s| s.duration_ns).sum()
    }

    /// Free-evolution durations before and after the π pulse.
    pub fn half_durations_ns(&self) -> (f64, f64) {
        let mut before = 0.0;
        let mut after = 0.0;
        let mut seen_pi = false;
        for s in &self.segments {
            if s.nv_action == NvAction::PiPulse {
                seen_pi = true;
            }
            if seen_pi {
                after += s.duration_ns;
            } else {
                before += s.duration_ns;
            }
        }
        (before, after)
    }

    /// Evolution segments grouped into the intervals between NV pulses.
    pub fn intervals(&self) -> Vec<Vec<Segment>> {
        let mut out: Vec<Vec<Segment>> = Vec::new();
        let mut current: Option<Vec<Segment>> = None;
        for s in &self.segments {
            if s.is_nv_pulse() {
                if let Some(iv) = current.take() {
                    out.push(iv);
                }
                current = Some(Vec::new());
            } else if let Some(iv) = current.as_mut() {
                iv.push(*s);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn push_half(segments: &mut Vec<Segment>, tau_ns: f64, drive: &DriveParams) {
    let offset = drive.offset_after_nv_pulse_ns;
    let window = drive.window_ns();
    if offset > 0.0 {
        segments.push(Segment::evolve(offset, RadicalAction::Off));
    }
    match drive.pulse {
        DrivePulse::Finite => {
            if window > 0.0 {
                segments.push(Segment::evolve(window, RadicalAction::Drive));
            }
        }
        DrivePulse::InstantaneousPi => segments.push(Segment::evolve(0.0, RadicalAction::InstantPi)),
    }
    let rest = tau_ns - offset - window;
    if rest > 0.0 {
        segments.push(Segment::evolve(rest, RadicalAction::Off));
    }
}

/// Build the DEER timeline for echo-half length `tau_ns`.
pub fn build_deer_timeline(tau_ns: f64, drive: &DriveParams, readout_phase_deg: f64) -> Result<DeerTimeline> {
    if !(tau_ns > 0.0) || !tau_ns.is_finite() {
        return Err(DeerError::Parameter(format!("tau must be > 0 ns, got {tau_ns}")));
    }
    drive.validate()?;
    if readout_phase_deg != 0.0 && readout_phase_deg != 180.0 {
        return Err(DeerError::Parameter(format!(
            "readout phase must be 0 or 180 degrees, got {readout_phase_deg}"
        )));
    }
    let window = drive.window_ns();
    let offset = drive.offset_after_nv_pulse_ns;
    if window + offset > tau_ns {
        return Err(DeerError::Constraint(format!(
            "drive window Ts = {window} ns plus offset = {offset} ns exceeds the echo half tau = {tau_ns} ns"
        )));
    }
    let mut segments = vec![Segment::pulse(NvAction::HalfPulseX)];
    push_half(&mut segments, tau_ns, drive);
    segments.push(Segment::pulse(NvAction::PiPulse));
    push_half(&mut segments, tau_ns, drive);
    segments.push(Segment::pulse(NvAction::HalfPulsePhase(readout_phase_deg)));
    Ok(DeerTimeline { segments, tau_ns, readout_phase_deg })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Values are drive durations Tₛ in ns.
    #[serde(alias = "ts")]
    TsSweep,
    /// Values are absolute drive frequencies in MHz.
    #[serde(alias = "frequency")]
    FrequencySweep,
}

/// One drive parameter set per sweep value, everything else held at `base`.
///
/// For frequency sweeps `values` are absolute frequencies and the stored
/// offset is `value − resonance_mhz`.
pub fn sweep_axis(
    kind: SweepKind,
    values: &[f64],
    base: &DriveParams,
    tau_ns: f64,
    resonance_mhz: f64,
) -> Result<Vec<DriveParams>> {
    if values.is_empty() {
        return Err(DeerError::Constraint("sweep values must not be empty".into()));
    }
    let mut offenders = Vec::new();
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut d = *base;
        match kind {
            SweepKind::TsSweep => {
                d.duration_ns = v;
                let fits = v.is_finite() && v >= 0.0 && d.window_ns() + d.offset_after_nv_pulse_ns <= tau_ns;
                if !fits {
                    offenders.push(v);
                }
            }
            SweepKind::FrequencySweep => {
                d.frequency_offset_mhz = v - resonance_mhz;
                if !v.is_finite() || d.window_ns() + d.offset_after_nv_pulse_ns > tau_ns {
                    offenders.push(v);
                }
            }
        }
        out.push(d);
    }
    if !offenders.is_empty() {
        return Err(DeerError::Constraint(format!(
            "sweep values out of range for tau = {tau_ns} ns, offset = {} ns: {offenders:?}",
            base.offset_after_nv_pulse_ns
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(ts: f64, offset: f64) -> DriveParams {
        DriveParams { duration_ns: ts, offset_after_nv_pulse_ns: offset, ..Default::default() }
    }

    #[test]
    fn zero_ts_is_plain_hahn_echo() {
        let t = build_deer_timeline(900.0, &drive(0.0, 0.0), 0.0).unwrap();
        assert_eq!(t.drive_on_ns(), 0.0);
        assert!(t.segments.iter().all(|s| s.radical == RadicalAction::Off));
        assert_eq!(t.half_durations_ns(), (900.0, 900.0));
    }

    #[test]
    fn drive_filling_each_half_validates() {
        let t = build_deer_timeline(900.0, &drive(900.0, 0.0), 0.0).unwrap();
        assert_eq!(t.drive_on_ns(), 1800.0);
        assert_eq!(t.total_duration_ns(), 1800.0);
    }

    #[test]
    fn oversized_window_is_rejected() {
        let err = build_deer_timeline(900.0, &drive(950.0, 0.0), 0.0).unwrap_err();
        assert!(matches!(err, DeerError::Constraint(ref m) if m.contains("950") && m.contains("900")));
        assert!(build_deer_timeline(900.0, &drive(850.0, 60.0), 0.0).is_err());
    }

    #[test]
    fn invariants_hold_with_offset() {
        let t = build_deer_timeline(900.0, &drive(120.0, 30.0), 180.0).unwrap();
        let (a, b) = t.half_durations_ns();
        assert_eq!(a, b);
        assert_eq!(a, 900.0);
        assert_eq!(t.drive_on_ns(), 240.0);
        assert_eq!(t.intervals().len(), 2);
        let first = &t.intervals()[0];
        assert_eq!(first[0].radical, RadicalAction::Off);
        assert_eq!(first[0].duration_ns, 30.0);
        assert_eq!(first[1].radical, RadicalAction::Drive);
    }

    #[test]
    fn readout_phase_only_changes_final_pulse() {
        let d = drive(200.0, 10.0);
        let a = build_deer_timeline(500.0, &d, 0.0).unwrap();
        let b = build_deer_timeline(500.0, &d, 180.0).unwrap();
        let n = a.segments.len();
        assert_eq!(a.segments[..n - 1], b.segments[..n - 1]);
        assert_eq!(b.segments[n - 1].nv_action, NvAction::HalfPulsePhase(180.0));
        assert!(build_deer_timeline(500.0, &d, 90.0).is_err());
    }

    #[test]
    fn instantaneous_drive_has_zero_width_flips() {
        let t = build_deer_timeline(900.0, &DriveParams::instantaneous(0.0), 0.0).unwrap();
        let flips = t.segments.iter().filter(|s| s.radical == RadicalAction::InstantPi).count();
        assert_eq!(flips, 2);
        assert_eq!(t.total_duration_ns(), 1800.0);
    }

    #[test]
    fn ts_sweep_varies_only_duration() {
        let base = drive(0.0, 0.0);
        let out = sweep_axis(SweepKind::TsSweep, &[20.0, 40.0, 60.0], &base, 900.0, 0.0).unwrap();
        assert_eq!(out.len(), 3);
        for (d, v) in out.iter().zip([20.0, 40.0, 60.0]) {
            assert_eq!(DriveParams { duration_ns: base.duration_ns, ..*d }, base);
            assert_eq!(d.duration_ns, v);
        }
    }

    #[test]
    fn frequency_sweep_offsets() {
        let values: Vec<f64> = (0..=8).map(|i| 612.0 + 10.0 * i as f64).collect();
        let out = sweep_axis(SweepKind::FrequencySweep, &values, &drive(100.0, 0.0), 900.0, 652.0).unwrap();
        assert_eq!(out.first().unwrap().frequency_offset_mhz, -40.0);
        assert_eq!(out.last().unwrap().frequency_offset_mhz, 40.0);
    }

    #[test]
    fn bad_sweeps_list_offenders() {
        assert!(sweep_axis(SweepKind::TsSweep, &[], &drive(0.0, 0.0), 900.0, 0.0).is_err());
        let err = sweep_axis(SweepKind::TsSweep, &[100.0, 1000.0, -5.0], &drive(0.0, 0.0), 900.0, 0.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1000") && msg.contains("-5"), "{msg}");
    }

    #[test]
    fn timeline_json_round_trip() {
        let t = build_deer_timeline(900.0, &drive(100.0, 20.0), 0.0).unwrap();
        assert_eq!(DeerTimeline::from_json(&t.to_json().unwrap()).unwrap(), t);
    }
}
