//! Knot tables as CSV (`t,x…,v…`) plus JSON metadata.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the knots bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub knots: usize,
    pub dim: usize,
    pub energy: f64,
}

impl TrajectoryMeta {
    pub fn of(traj: &Trajectory) -> Self {
        TrajectoryMeta {
            horizon: traj.horizon(),
            knots: traj.times().len(),
            dim: traj.dim(),
            energy: traj.energy(2.0),
        }
    }
}

fn header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    if dim == 1 {
        h.extend(["x".into(), "v".into()]);
    } else {
        h.extend(["x0".into(), "x1".into(), "v0".into(), "v1".into()]);
    }
    h
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("trajectory csv: {e}"))
}

pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(traj.dim())).map_err(csv_err)?;
    let d = traj.dim();
    for (t, k) in traj.times().iter().zip(traj.knots()) {
        let mut row = vec![t.to_string()];
        row.extend(k.x[..d].iter().map(f64::to_string));
        row.extend(k.v[..d].iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)?;
    Ok(())
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut buf = Vec::new();
    write_csv(traj, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

pub fn read_csv<R: Read>(input: R) -> Result<Trajectory> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers().map_err(csv_err)?.len();
    let dim = match cols {
        3 => 1,
        5 => 2,
        n => return Err(csv_err(format!("expected 3 or 5 columns, found {n}"))),
    };
    let mut times = Vec::new();
    let mut knots = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(csv_err))
            .collect::<Result<Vec<_>>>()?;
        times.push(vals[0]);
        let mut s = State::rest([0.0; 2]);
        s.x[..dim].copy_from_slice(&vals[1..1 + dim]);
        s.v[..dim].copy_from_slice(&vals[1 + dim..1 + 2 * dim]);
        knots.push(s);
    }
    Trajectory::new(dim, times, knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let traj = Trajectory::new(
            2,
            vec![0.0, 0.1, 1.0 / 3.0],
            vec![
                State::new_2d([0.1, 1e-300], [-2.5e-17, 3.0]),
                State::new_2d([std::f64::consts::PI, -0.0], [1.0 / 7.0, 0.2]),
                State::new_2d([0.3, 0.7], [0.0, 0.0]),
            ],
        )
        .unwrap();
        let text = trajectory_csv(&traj);
        assert!(text.starts_with("t,x0,x1,v0,v1\n"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, traj);
        let meta = TrajectoryMeta::of(&traj);
        let json = serde_json::to_string(&meta).unwrap();
        assert!(json.contains("\"T\":") && json.contains("\"N\":3"));
    }
}
