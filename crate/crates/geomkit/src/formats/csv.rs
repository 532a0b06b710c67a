//! Plain CSV writers. Floats use the shortest round-trip representation.

use geomkit_core::embed::LogRow;

pub const LOG_HEADER: &str = "epoch,step,recon,dist_g,tan_g,dist_e,tan_e,total";

pub fn training_log(rows: &[LogRow]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.step, r.recon, r.dist_g, r.tan_g, r.dist_e, r.tan_e, r.total
        ));
    }
    out
}

/// One row per curve point, columns `x0..x{d-1}`.
pub fn curve(points: &[Vec<f64>]) -> String {
    let d = points.first().map_or(0, Vec::len);
    let mut out = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for p in points {
        out.push_str(&p.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rows() {
        let s = curve(&[vec![0.0, 1.5], vec![-2.0, 0.1]]);
        assert_eq!(s, "x0,x1\n0,1.5\n-2,0.1\n");
    }

    #[test]
    fn log_rows() {
        let r = LogRow { epoch: 1, step: 7, recon: 0.5, dist_g: 0.0, tan_g: 0.25, dist_e: 1.0, tan_e: 2.0, total: 3.75 };
        assert_eq!(training_log(&[r]), format!("{LOG_HEADER}\n1,7,0.5,0,0.25,1,2,3.75\n"));
    }
}
