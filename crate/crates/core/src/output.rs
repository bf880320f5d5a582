//! File emitters: CSV tables, JSON reports, and SVG/PGM pictures.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cases::RegionCell;
use crate::error::Result;
use crate::profile::{DensityProfile, XiSample};
use crate::riemann::FrontKind;
use crate::scenario::{RunOutput, Scenario};
use crate::tracker::FrontPath;
use crate::trajectory::Trajectory;

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "NLOC_LWR_OUT";

pub fn output_dir(default: impl AsRef<Path>) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => default.as_ref().to_path_buf(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes a CSV with only a header when `rows` is empty.
fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        fs::write(path, format!("{}\n", header.join(",")))?;
        Ok(())
    } else {
        write_csv(path, rows)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub const FRONT_HEADER: [&str; 8] = ["id", "t_start", "x_start", "t_end", "x_end", "rho_left", "rho_right", "kind"];

#[derive(Serialize)]
struct PieceRow {
    t: f64,
    x_from: f64,
    x_to: f64,
    rho: f64,
}

fn profile_rows(traj: &Trajectory) -> Vec<PieceRow> {
    let mut rows = Vec::new();
    for snap in &traj.profiles {
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(&snap.breakpoints);
        edges.push(f64::INFINITY);
        for (k, &rho) in snap.values.iter().enumerate() {
            rows.push(PieceRow { t: snap.t, x_from: edges[k], x_to: edges[k + 1], rho });
        }
    }
    rows
}

#[derive(Serialize)]
struct Reports<'a> {
    scenario: &'a str,
    engine: &'a str,
    t_end: f64,
    events: usize,
    fronts: usize,
    mass_drift: f64,
    #[serde(flatten)]
    run: &'a RunOutput,
}

/// Writes every output of a run into `dir` and returns the files written.
pub fn write_run(dir: &Path, sc: &Scenario, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let traj = &out.trajectory;
    let mut files = Vec::new();
    let mut emit = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    fs::write(emit("scenario.json"), sc.to_json() + "\n")?;
    write_table(&emit("fronts.csv"), &FRONT_HEADER, &traj.paths)?;
    write_table(&emit("xi.csv"), &["t", "xi", "q"], &traj.xi.samples)?;
    write_table(&emit("profiles.csv"), &["t", "x_from", "x_to", "rho"], &profile_rows(traj))?;
    let mut events = String::new();
    for e in &traj.events {
        events.push_str(&serde_json::to_string(e).expect("event serializes"));
        events.push('\n');
    }
    fs::write(emit("events.jsonl"), events)?;
    let reports = Reports {
        scenario: &sc.name,
        engine: &traj.engine,
        t_end: traj.t_end,
        events: traj.events.len(),
        fronts: traj.paths.len(),
        mass_drift: traj.mass_drift(),
        run: out,
    };
    write_json(&emit("reports.json"), &reports)?;
    if let Some(ev) = &out.evacuation {
        write_json(&emit("evacuation.json"), ev)?;
    }
    if sc.output.svg {
        fs::write(emit("fronts.svg"), fronts_svg(&traj.paths, traj.t_end))?;
        if let Some(rho) = &traj.final_profile {
            fs::write(emit("profile.svg"), profile_svg(rho, traj.t_end))?;
        }
    }
    Ok(files)
}

pub fn read_fronts(path: &Path) -> Result<Vec<FrontPath>> {
    let mut rd = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<FrontPath>, _> = rd.deserialize().collect();
    Ok(rows?)
}

pub fn read_xi(path: &Path) -> Result<Vec<XiSample>> {
    let mut rd = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<XiSample>, _> = rd.deserialize().collect();
    Ok(rows?)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 40.0;

/// Linear map of `[lo, hi]` onto `[a, b]`.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) * (b - a) / (hi - lo)
    } else {
        0.5 * (a + b)
    }
}

/// x-t diagram of the front paths; the nonclassical fronts at the exit
/// are drawn thick and red.
pub fn fronts_svg(paths: &[FrontPath], t_end: f64) -> String {
    let finite = paths.iter().flat_map(|p| [p.x_start, p.x_end]).filter(|x| x.is_finite());
    let (mut lo, mut hi) = finite.fold((0.0_f64, 0.0_f64), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let t_top = if t_end > 0.0 { t_end } else { 1.0 };
    let px = |x: f64| scale(x, lo, hi, MARGIN, WIDTH - MARGIN);
    let pt = |t: f64| scale(t, 0.0, t_top, HEIGHT - MARGIN, MARGIN);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{0:.3}" y1="{1:.3}" x2="{0:.3}" y2="{2:.3}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        pt(0.0),
        pt(t_top)
    );
    let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-size="12">x = 0</text>"#, px(0.0) + 4.0, MARGIN - 8.0);
    for kind in [FrontKind::Fan, FrontKind::Shock, FrontKind::Nonclassical] {
        let (stroke, width) = match kind {
            FrontKind::Fan => ("#7a9cc6", 0.5),
            FrontKind::Shock => ("black", 1.0),
            FrontKind::Nonclassical => ("#d62728", 3.0),
        };
        let _ = writeln!(s, r#"<g stroke="{stroke}" stroke-width="{width}" fill="none">"#);
        for p in paths.iter().filter(|p| p.kind == kind) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}"/>"#,
                px(p.x_start),
                pt(p.t_start),
                px(p.x_end),
                pt(p.t_end)
            );
        }
        s.push_str("</g>\n");
    }
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.3}" font-size="12">x in [{lo}, {hi}], t in [0, {t_top}]</text>"#,
        HEIGHT - 10.0
    );
    s.push_str("</svg>\n");
    s
}

/// Step plot of a density profile.
pub fn profile_svg(rho: &DensityProfile, t: f64) -> String {
    let bps = rho.breakpoints();
    let (lo, hi) = match (bps.first(), bps.last()) {
        (Some(&a), Some(&b)) if b > a => (a - 0.1 * (b - a), b + 0.1 * (b - a)),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (-1.0, 1.0),
    };
    let top = rho.values().iter().fold(0.0_f64, |m, &v| m.max(v)).max(1e-12);
    let px = |x: f64| scale(x, lo, hi, MARGIN, WIDTH - MARGIN);
    let py = |v: f64| scale(v, 0.0, top, HEIGHT - MARGIN, MARGIN);
    let mut pts = Vec::new();
    let mut edges = vec![lo];
    edges.extend(bps.iter().copied());
    edges.push(hi);
    for (k, &v) in rho.values().iter().enumerate() {
        pts.push(format!("{:.3},{:.3}", px(edges[k]), py(v)));
        pts.push(format!("{:.3},{:.3}", px(edges[k + 1]), py(v)));
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, pts.join(" "));
    let _ =
        writeln!(s, r#"<text x="{MARGIN}" y="{:.3}" font-size="12">rho at t = {t}, max {top}</text>"#, HEIGHT - 10.0);
    s.push_str("</svg>\n");
    s
}

/// Gray for classical cells, white for nonclassical, dark for pathological.
fn tone(cell: &RegionCell) -> u8 {
    if cell.label.is_classical() {
        160
    } else if cell.label.is_nonclassical() {
        255
    } else {
        64
    }
}

#[derive(Serialize)]
struct CellRow {
    rho_l: f64,
    rho_r: f64,
    label: String,
    flux_rq: f64,
    flux_rp: f64,
    solutions: usize,
}

/// Writes `region_map.csv`, `.pgm` and `.svg` for an `n x n` grid whose cells
/// are ordered by `rho_r`, then `rho_l`.
pub fn write_region_map(dir: &Path, cells: &[RegionCell], n: usize) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("region_map.csv");
    write_csv(
        &csv_path,
        cells.iter().map(|c| CellRow {
            rho_l: c.rho_l,
            rho_r: c.rho_r,
            label: c.label.to_string(),
            flux_rq: c.flux_rq,
            flux_rp: c.flux_rp,
            solutions: c.solutions,
        }),
    )?;
    // rho_r grows upwards, so the top raster row is the last grid row
    let mut pgm = format!("P2\n{n} {n}\n255\n");
    for j in (0..n).rev() {
        let row: Vec<String> = (0..n).map(|i| tone(&cells[j * n + i]).to_string()).collect();
        pgm.push_str(&row.join(" "));
        pgm.push('\n');
    }
    let pgm_path = dir.join("region_map.pgm");
    fs::write(&pgm_path, pgm)?;

    let cell = (WIDTH - 2.0 * MARGIN) / n as f64;
    let mut s = String::new();
    let side = WIDTH;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{side}" viewBox="0 0 {side} {side}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for j in 0..n {
        let y = MARGIN + (n - 1 - j) as f64 * cell;
        let mut i = 0;
        while i < n {
            let t = tone(&cells[j * n + i]);
            let start = i;
            while i < n && tone(&cells[j * n + i]) == t {
                i += 1;
            }
            if t != 255 {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.3}" y="{y:.3}" width="{:.3}" height="{cell:.3}" fill="rgb({t},{t},{t})"/>"#,
                    MARGIN + start as f64 * cell,
                    (i - start) as f64 * cell
                );
            }
        }
    }
    let frame = WIDTH - 2.0 * MARGIN;
    let _ =
        writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{frame}" height="{frame}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{:.3}" font-size="12">rho_L to the right, rho_R upwards</text>"#,
        side - 12.0
    );
    s.push_str("</svg>\n");
    let svg_path = dir.join("region_map.svg");
    fs::write(&svg_path, s)?;
    Ok(vec![csv_path, pgm_path, svg_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_of_no_fronts_is_well_formed() {
        let s = fronts_svg(&[], 1.0);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn fronts_round_trip_through_csv() {
        let dir = std::env::temp_dir().join(format!("nloc-lwr-fronts-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fronts.csv");
        let rows = vec![FrontPath {
            id: 3,
            t_start: 0.0,
            x_start: -1.0,
            t_end: 2.0,
            x_end: 0.0,
            rho_left: 0.25,
            rho_right: 0.0,
            kind: FrontKind::Nonclassical,
        }];
        write_table(&path, &FRONT_HEADER, &rows).unwrap();
        assert_eq!(read_fronts(&path).unwrap(), rows);
        write_table::<FrontPath>(&path, &FRONT_HEADER, &[]).unwrap();
        assert!(read_fronts(&path).unwrap().is_empty());
        fs::remove_dir_all(&dir).unwrap();
    }
}
