//! CSV emission. Comma separated, `.` decimal, header row, LF line endings.
//! Floats use Rust's shortest round-trip formatting, so output bytes depend
//! only on the computed values.

use hris_core::aoa::AoaRow;
use hris_core::array::{Direction, PlanarArray};
use hris_core::chest::{RfSweepRow, TradeoffRow};
use hris_core::linalg::{to_db, CVector};

use crate::SimError;

/// Lower clip for beampattern gains, in dB relative to the peak.
pub const GAIN_FLOOR_DB: f64 = -300.0;

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, SimError> {
    let bytes = w
        .into_inner()
        .map_err(|e| SimError::io("flushing CSV", std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

fn record(w: &mut csv::Writer<Vec<u8>>, fields: &[String]) -> Result<(), SimError> {
    w.write_record(fields)
        .map_err(|e| SimError::io("writing CSV", std::io::Error::other(e.to_string())))
}

fn header(w: &mut csv::Writer<Vec<u8>>, names: &[&str]) -> Result<(), SimError> {
    record(w, &names.iter().map(|s| s.to_string()).collect::<Vec<_>>())
}

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn aoa_csv(rows: &[AoaRow]) -> Result<String, SimError> {
    let mut w = writer();
    header(
        &mut w,
        &[
            "N",
            "sensed_fraction",
            "snr_db",
            "n_trials",
            "rmse_rad",
            "rmse_deg",
            "crlb_rad",
        ],
    )?;
    for r in rows {
        record(
            &mut w,
            &[
                r.n_atoms.to_string(),
                num(r.sensed_fraction),
                num(r.snr_db),
                r.n_trials.to_string(),
                num(r.rmse_rad),
                num(r.rmse_deg),
                num(r.crlb_rad),
            ],
        )?;
    }
    finish(w)
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> Result<String, SimError> {
    let mut w = writer();
    header(
        &mut w,
        &[
            "rho",
            "phase_draw",
            "n_trials",
            "nmse_H",
            "nmse_H_db",
            "nmse_G",
            "nmse_G_db",
        ],
    )?;
    for r in rows {
        record(
            &mut w,
            &[
                num(r.rho),
                r.phase_draw.to_string(),
                r.n_trials.to_string(),
                num(r.nmse_h),
                num(to_db(r.nmse_h)),
                num(r.nmse_g),
                num(to_db(r.nmse_g)),
            ],
        )?;
    }
    finish(w)
}

pub fn rfsweep_csv(rows: &[RfSweepRow]) -> Result<String, SimError> {
    let mut w = writer();
    header(
        &mut w,
        &[
            "n_rf",
            "snr_db",
            "n_trials",
            "pilots",
            "nmse_cascaded",
            "nmse_cascaded_db",
            "baseline_nmse",
            "baseline_nmse_db",
            "baseline_status",
        ],
    )?;
    for r in rows {
        let (b, b_db, status) = match r.baseline_nmse {
            Some(b) => (num(b), num(to_db(b)), "ok"),
            None => (String::new(), String::new(), "infeasible"),
        };
        record(
            &mut w,
            &[
                r.n_rf.to_string(),
                num(r.snr_db),
                r.n_trials.to_string(),
                r.pilots.to_string(),
                num(r.nmse_cascaded),
                num(to_db(r.nmse_cascaded)),
                b,
                b_db,
                status.to_string(),
            ],
        )?;
    }
    finish(w)
}

/// `(angle_deg, gain_db)` of `|sum_n w_n a_n|^2` over signed angles in the
/// x-z plane, normalized so the largest sample is 0 dB.
pub fn beampattern(
    array: &PlanarArray<f64>,
    weights: &CVector<f64>,
    lo_deg: f64,
    hi_deg: f64,
    n_points: usize,
) -> Result<Vec<(f64, f64)>, SimError> {
    if n_points < 2 || !(lo_deg < hi_deg) {
        return Err(SimError::Config(
            "beampattern grid needs >= 2 points and lo < hi".into(),
        ));
    }
    let step = (hi_deg - lo_deg) / (n_points - 1) as f64;
    let mut pts = Vec::with_capacity(n_points);
    for i in 0..n_points {
        // Snap to 1e-9 deg so grid angles print as typed.
        let angle = ((lo_deg + step * i as f64) * 1e9).round() / 1e9;
        let dir = Direction::from_signed_elevation(angle.to_radians())?;
        pts.push((angle, array.array_factor(weights, &dir)?.norm_sqr()));
    }
    let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(SimError::Config("beampattern weights are all zero".into()));
    }
    Ok(pts
        .into_iter()
        .map(|(a, g)| (a, to_db(g / peak).max(GAIN_FLOOR_DB)))
        .collect())
}

pub fn beampattern_csv(points: &[(f64, f64)]) -> Result<String, SimError> {
    let mut w = writer();
    header(&mut w, &["angle_deg", "gain_db"])?;
    for &(a, g) in points {
        record(&mut w, &[num(a), num(g)])?;
    }
    finish(w)
}
