//! CSV writers for every output file.
//!
//! All files carry one header row. Floats are written as `{:.16e}` (17
//! significant digits) so values round-trip exactly and output bytes are a
//! pure function of the computed numbers.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64 as C64;

use crate::ensemble::{ChiMap, EnsembleSeries, ErgodicityReport};
use crate::fock::OracleSeries;
use crate::picture::CoherentAmplitude;
use crate::trajectory::Trajectory;

pub const SERIES_HEADER: [&str; 6] = ["source", "t", "mean_n", "emission_rate", "stderr", "frozen"];

/// Lossless decimal form of a float.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(w: W, header: &[&str]) -> io::Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file<F>(path: &Path, body: F) -> io::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let file = File::create(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush()
}

/// One labelled block of the shared ensemble-series schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBlock {
    pub source: String,
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub emission_rate: Vec<f64>,
    pub stderr: Vec<f64>,
    pub frozen: Vec<u64>,
}

impl SeriesBlock {
    pub fn trajectory(source: impl Into<String>, s: &EnsembleSeries) -> Self {
        Self {
            source: source.into(),
            times: s.times.clone(),
            mean_n: s.mean_n.clone(),
            emission_rate: s.emission_rate.clone(),
            stderr: s.stderr.clone(),
            frozen: s.frozen.clone(),
        }
    }

    pub fn oracle(s: &OracleSeries) -> Self {
        let g = s.times.len();
        Self {
            source: "oracle".into(),
            times: s.times.clone(),
            mean_n: s.mean_n.clone(),
            emission_rate: s.emission_rate.clone(),
            stderr: vec![0.0; g],
            frozen: vec![0; g],
        }
    }
}

/// `source,t,mean_n,emission_rate,stderr,frozen`, blocks in order.
pub fn write_series<W: Write>(w: W, blocks: &[SeriesBlock]) -> io::Result<()> {
    let mut out = writer(w, &SERIES_HEADER)?;
    for b in blocks {
        for i in 0..b.times.len() {
            out.write_record([
                b.source.clone(),
                fmt_float(b.times[i]),
                fmt_float(b.mean_n[i]),
                fmt_float(b.emission_rate[i]),
                fmt_float(b.stderr[i]),
                b.frozen[i].to_string(),
            ])?;
        }
    }
    out.flush()
}

/// Concatenated grid samples, `trajectory_index,t,re_alpha,im_alpha`.
pub fn write_trajectories<W: Write>(w: W, trajectories: &[Trajectory]) -> io::Result<()> {
    let mut out = writer(w, &["trajectory_index", "t", "re_alpha", "im_alpha"])?;
    for tr in trajectories {
        let idx = tr.stream.stream_index.to_string();
        for (t, a) in tr.times.iter().zip(&tr.alphas) {
            out.write_record([idx.clone(), fmt_float(*t), fmt_float(a.re), fmt_float(a.im)])?;
        }
    }
    out.flush()
}

/// Emission events, `trajectory_index,t_emit,detected` with `detected` 0 or 1.
pub fn write_events<W: Write>(w: W, trajectories: &[Trajectory]) -> io::Result<()> {
    let mut out = writer(w, &["trajectory_index", "t_emit", "detected"])?;
    for tr in trajectories {
        let idx = tr.stream.stream_index.to_string();
        for e in &tr.events {
            out.write_record([idx.clone(), fmt_float(e.time), u8::from(e.detected).to_string()])?;
        }
    }
    out.flush()
}

/// Wide table of `|α|`: one `t` column then one column per trajectory.
/// Cells after a halt are left empty.
pub fn write_magnitudes<W: Write>(w: W, grid: &[f64], trajectories: &[Trajectory]) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(trajectories.iter().map(|t| format!("traj_{}", t.stream.stream_index)));
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(&header)?;
    for (i, t) in grid.iter().enumerate() {
        let mut row = vec![fmt_float(*t)];
        row.extend(
            trajectories
                .iter()
                .map(|tr| tr.alphas.get(i).map(|a| fmt_float(a.norm())).unwrap_or_default()),
        );
        out.write_record(&row)?;
    }
    out.flush()
}

/// `re_alpha0,im_alpha0,chi,count,undecided_fraction`, real part fastest.
pub fn write_chi<W: Write>(w: W, map: &ChiMap) -> io::Result<()> {
    let mut out = writer(w, &["re_alpha0", "im_alpha0", "chi", "count", "undecided_fraction"])?;
    for c in &map.cells {
        out.write_record([
            fmt_float(c.alpha0.re),
            fmt_float(c.alpha0.im),
            fmt_float(c.chi),
            c.count.to_string(),
            fmt_float(c.undecided_fraction),
        ])?;
    }
    out.flush()
}

/// `t,i_analytic,i_montecarlo,stderr` from pre-computed columns.
pub fn write_emission_rate<W: Write>(
    w: W,
    times: &[f64],
    analytic: &[f64],
    monte_carlo: &[f64],
    stderr: &[f64],
) -> io::Result<()> {
    let mut out = writer(w, &["t", "i_analytic", "i_montecarlo", "stderr"])?;
    for i in 0..times.len() {
        out.write_record([
            fmt_float(times[i]),
            fmt_float(analytic[i]),
            fmt_float(monte_carlo[i]),
            fmt_float(stderr[i]),
        ])?;
    }
    out.flush()
}

/// `t,re_alpha_s,im_alpha_s` for Schrödinger-picture amplitudes.
pub fn write_spiral<W: Write>(w: W, times: &[f64], amplitudes: &[CoherentAmplitude]) -> io::Result<()> {
    let mut out = writer(w, &["t", "re_alpha_s", "im_alpha_s"])?;
    for (t, a) in times.iter().zip(amplitudes) {
        out.write_record([fmt_float(*t), fmt_float(a.value.re), fmt_float(a.value.im)])?;
    }
    out.flush()
}

/// Long-format series per β: `re_beta,im_beta,t,mean_n,emission_rate,stderr,frozen`.
pub fn write_beta_sweep<W: Write>(w: W, betas: &[C64], series: &[EnsembleSeries]) -> io::Result<()> {
    let mut out = writer(
        w,
        &["re_beta", "im_beta", "t", "mean_n", "emission_rate", "stderr", "frozen"],
    )?;
    for (b, s) in betas.iter().zip(series) {
        for i in 0..s.times.len() {
            out.write_record([
                fmt_float(b.re),
                fmt_float(b.im),
                fmt_float(s.times[i]),
                fmt_float(s.mean_n[i]),
                fmt_float(s.emission_rate[i]),
                fmt_float(s.stderr[i]),
                s.frozen[i].to_string(),
            ])?;
        }
    }
    out.flush()
}

/// Long-format series per initial phase: `phi,t,mean_n,emission_rate,stderr,frozen`.
pub fn write_phase_sweep<W: Write>(w: W, phases: &[f64], series: &[EnsembleSeries]) -> io::Result<()> {
    let mut out = writer(w, &["phi", "t", "mean_n", "emission_rate", "stderr", "frozen"])?;
    for (phi, s) in phases.iter().zip(series) {
        for i in 0..s.times.len() {
            out.write_record([
                fmt_float(*phi),
                fmt_float(s.times[i]),
                fmt_float(s.mean_n[i]),
                fmt_float(s.emission_rate[i]),
                fmt_float(s.stderr[i]),
                s.frozen[i].to_string(),
            ])?;
        }
    }
    out.flush()
}

/// `trajectory_index,time_average`.
pub fn write_time_averages<W: Write>(w: W, report: &ErgodicityReport) -> io::Result<()> {
    let mut out = writer(w, &["trajectory_index", "time_average"])?;
    for (i, v) in report.time_averages.iter().enumerate() {
        out.write_record([i.to_string(), fmt_float(*v)])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{run_ensemble, uniform_grid, EnsembleOptions};
    use crate::params::CavityParams;
    use crate::rng::RandomStream;
    use crate::trajectory::{simulate, SimOptions};

    fn text(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 64.0 * (1.0 - (-4.0f64).exp()).powi(2), 1e-300, -2.5e17, 0.0] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn series_layout() {
        let p = CavityParams::feedback(1.0, 0.0, C64::new(2.0, 0.0));
        let g = uniform_grid(1.0, 3);
        let s = run_ensemble(C64::new(2.0, 0.0), &p, 4, 1.0, &g, 1, &EnsembleOptions::default()).unwrap();
        let csv = text(|w| write_series(w, &[SeriesBlock::trajectory("trajectory", &s)]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "source,t,mean_n,emission_rate,stderr,frozen");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("trajectory,0.0000000000000000e0,4.0000000000000000e0,"));
        assert!(lines[3].ends_with(",0"));
    }

    #[test]
    fn magnitudes_leave_halted_cells_empty() {
        let p = CavityParams::feedback(1.0, 0.5, C64::new(2.0, 0.0));
        let g = uniform_grid(1.0, 3);
        let opts = SimOptions::waiting_time();
        let halted = simulate(C64::new(200.0, 0.0), 1.0, &p, RandomStream::new(1, 0), &g, &opts).unwrap();
        let fine = simulate(C64::new(0.0, 0.0), 1.0, &p, RandomStream::new(1, 1), &g, &opts).unwrap();
        let csv = text(|w| write_magnitudes(w, &g, &[halted, fine]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,traj_0,traj_1");
        assert_eq!(lines[2], "5.0000000000000000e-1,,0.0000000000000000e0");
    }

    #[test]
    fn events_flag_detection() {
        let p = CavityParams::laser(1.0, 8.0);
        let t = simulate(C64::new(0.0, 0.0), 1.0, &p, RandomStream::new(2, 7), &[1.0], &SimOptions::default()).unwrap();
        let csv = text(|w| write_events(w, std::slice::from_ref(&t)));
        assert_eq!(csv.lines().count(), t.events.len() + 1);
        // η = 0 for a plain laser run, so nothing counts as detected
        assert!(csv.lines().skip(1).all(|l| l.starts_with("7,") && l.ends_with(",0")));
    }

    #[test]
    fn file_errors_name_the_path() {
        let err = write_file(Path::new("/nonexistent-dir/x.csv"), |_| Ok(())).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }
}
