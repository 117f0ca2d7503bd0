//! `proprio.csv`: header `t,openness,force` then one row per sample.

use clue_tensor::Tensor;

use crate::error::{DataError, Result};

pub const HEADER: &str = "t,openness,force";

/// Gripper trace: sample times plus a `[T_p, 2]` tensor of (openness, force).
#[derive(Debug, Clone, PartialEq)]
pub struct ProprioTrace {
    pub times: Vec<f64>,
    pub values: Tensor<f64>,
}

impl ProprioTrace {
    pub fn new(times: Vec<f64>, values: Tensor<f64>) -> Result<Self> {
        match *values.shape() {
            [n, 2] if n == times.len() => {}
            ref s => {
                return Err(DataError::Input(format!(
                    "proprio values {s:?} do not match {} timestamps",
                    times.len()
                )))
            }
        }
        if !times.windows(2).all(|w| w[0] < w[1]) || !times.iter().all(|t| t.is_finite()) {
            return Err(DataError::Input("proprio timestamps must be strictly ascending".into()));
        }
        if let Some(v) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::Input(format!("proprio value {v} outside [0, 1]")));
        }
        Ok(ProprioTrace { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn format_proprio(p: &ProprioTrace) -> String {
    let mut s = String::with_capacity(32 * p.len() + 20);
    s.push_str(HEADER);
    s.push('\n');
    for (t, row) in p.times.iter().zip(p.values.data().chunks_exact(2)) {
        s.push_str(&format!("{t:.6},{:.6},{:.6}\n", row[0], row[1]));
    }
    s
}

pub fn parse_proprio(text: &str) -> Result<ProprioTrace> {
    let err = |off: usize, msg: String| DataError::format("proprio.csv", off, msg);
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end() != HEADER {
        return Err(err(0, format!("expected header {HEADER:?}")));
    }
    offset += header.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for raw in lines {
        let line = raw.trim_end();
        if !line.is_empty() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(err(offset, format!("expected 3 fields, got {}", fields.len())));
            }
            let mut nums = [0.0; 3];
            let mut col = offset;
            for (slot, f) in nums.iter_mut().zip(&fields) {
                *slot = f
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(col, format!("invalid number {f:?}")))?;
                col += f.len() + 1;
            }
            if times.last().is_some_and(|&last| nums[0] <= last) {
                return Err(err(offset, "timestamps not strictly ascending".into()));
            }
            if !(0.0..=1.0).contains(&nums[1]) || !(0.0..=1.0).contains(&nums[2]) {
                return Err(err(offset, "openness and force must lie in [0, 1]".into()));
            }
            times.push(nums[0]);
            values.extend_from_slice(&nums[1..]);
        }
        offset += raw.len();
    }
    if times.is_empty() {
        return Err(err(offset, "no samples".into()));
    }
    let n = times.len();
    ProprioTrace::new(times, Tensor::new(vec![n, 2], values).expect("proprio shape"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_stable() {
        let p = ProprioTrace::new(
            vec![0.0, 1.28, 62.72],
            Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.3333333333, 0.51, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let s = format_proprio(&p);
        let back = parse_proprio(&s).unwrap();
        assert_eq!(format_proprio(&back), s);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_proprio("t,openness,force\n").is_err());
        assert!(parse_proprio("x,y\n0,0,0\n").is_err());
        assert!(parse_proprio("t,openness,force\n0,0.5\n").is_err());
        assert!(parse_proprio("t,openness,force\n0,1.5,0\n").is_err());
        assert!(parse_proprio("t,openness,force\n1,0,0\n0,0,0\n").is_err());
        let e = parse_proprio("t,openness,force\n0,0,0\n1,nan,0\n").unwrap_err();
        assert!(matches!(e, DataError::Format { offset: 25, .. }), "{e}");
    }
}
