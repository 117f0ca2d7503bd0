//! Grad-CAM over the visual backbone and heat-map overlays.

use clue_data::{Label, Quadrant};
use clue_tensor::{Graph, Mode, Scalar, Tensor, Var};
use clue_tensor::rng::seeded;

use crate::error::{CoreError, Result};
use crate::model::{ClueModel, ModelInput, VisualInput};

/// Normalised class-activation map for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    /// `[h, w]` at the tap resolution, values in [0, 1]
    pub values: Tensor<f64>,
    pub target: Label,
    pub frame_index: usize,
    /// `[S, S]`, values in [0, 1]
    pub upsampled: Tensor<f64>,
    /// per-channel weights: spatial means of the logit gradient
    pub alpha: Vec<f64>,
    /// set when every gradient-weighted activation was ≤ 0 or the map was constant
    pub is_zero: bool,
}

impl ActivationMap {
    /// Fraction of upsampled mass inside `q`; 0 for an all-zero map.
    pub fn quadrant_mass(&self, q: Quadrant) -> f64 {
        let &[h, w] = self.upsampled.shape() else { unreachable!("2-d map") };
        let data = self.upsampled.data();
        let total: f64 = data.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let inside: f64 = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| q.contains(x, y, w, h))
            .map(|(y, x)| data[y * w + x])
            .sum();
        inside / total
    }
}

fn frames_of<T>(input: &ModelInput<T>) -> Result<&[Tensor<T>]> {
    match &input.visual {
        Some(VisualInput::Frames(f)) => Ok(f),
        _ => Err(CoreError::Input("Grad-CAM needs raw frames for the visual stream".into())),
    }
}

fn check_request<T: Scalar>(model: &ClueModel<T>, input: &ModelInput<T>, frame_index: usize) -> Result<usize> {
    if model.arch.visual.is_none() {
        return Err(CoreError::Input("model has no visual stream".into()));
    }
    let n = frames_of(input)?.len();
    if frame_index >= n {
        return Err(CoreError::Input(format!("frame index {frame_index} out of range for {n} frames")));
    }
    Ok(n)
}

/// Eval-mode logit of `target` with `shift[k]` added to every cell of tap
/// channel `k` on frame `frame_index`.
pub fn shifted_logit<T: Scalar>(
    model: &ClueModel<T>,
    input: &ModelInput<T>,
    target: Label,
    frame_index: usize,
    shift: &[f64],
) -> Result<f64> {
    check_request(model, input, frame_index)?;
    let [c, h, w] = model.arch.visual.as_ref().expect("checked").backbone.tap_shape();
    if shift.len() != c {
        return Err(CoreError::Input(format!("{} channel shifts for {c} channels", shift.len())));
    }
    let offset = Tensor::from_f64(
        &[c, h, w],
        &shift.iter().flat_map(|&s| std::iter::repeat_n(s, h * w)).collect::<Vec<_>>(),
    )?;
    let mut g = Graph::new(&model.store);
    let mut hook = |g: &mut Graph<'_, T>, t: usize, tap: Var| -> Result<Var> {
        if t != frame_index {
            return Ok(tap);
        }
        let d = g.input(offset.clone());
        Ok(g.add(tap, d)?)
    };
    let out = model.arch.forward(&mut g, input, Mode::Eval, &mut seeded(0), Some(&mut hook))?;
    Ok(g.value(out.logits).to_f64_vec()[target.index()])
}

/// Gradient-weighted class activation map for `target` on one frame.
pub fn grad_cam<T: Scalar>(
    model: &ClueModel<T>,
    input: &ModelInput<T>,
    target: Label,
    frame_index: usize,
) -> Result<ActivationMap> {
    check_request(model, input, frame_index)?;
    let size = frames_of(input)?[frame_index].shape()[1];
    let mut g = Graph::new(&model.store);
    let mut captured = None;
    let mut hook = |_: &mut Graph<'_, T>, t: usize, tap: Var| -> Result<Var> {
        if t == frame_index {
            captured = Some(tap);
        }
        Ok(tap)
    };
    let out = model.arch.forward(&mut g, input, Mode::Eval, &mut seeded(0), Some(&mut hook))?;
    let tap = captured.expect("hook runs for every frame");
    let y = g.slice(out.logits, target.index(), 1)?;
    let grads = g.backward(y)?;
    let acts = g.value(tap).to_f64_vec();
    let &[c, h, w] = g.shape(tap) else { unreachable!("tap is [c, h, w]") };
    let grad = match grads.wrt(tap) {
        Some(t) => t.to_f64_vec(),
        None => vec![0.0; c * h * w],
    };
    let hw = h * w;
    let alpha: Vec<f64> = grad.chunks(hw).map(|ch| ch.iter().sum::<f64>() / hw as f64).collect();
    let mut cam = vec![0.0; hw];
    for (k, a) in alpha.iter().enumerate() {
        for (m, act) in cam.iter_mut().zip(&acts[k * hw..(k + 1) * hw]) {
            *m += a * act;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let (lo, hi) = cam.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let is_zero = hi <= 0.0 || hi - lo <= f64::EPSILON * hi.abs();
    if is_zero {
        cam.fill(0.0);
    } else {
        cam.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    let up = upsample_aligned(&cam, h, w, size, size);
    Ok(ActivationMap {
        values: Tensor::new(vec![h, w], cam)?,
        target,
        frame_index,
        upsampled: Tensor::new(vec![size, size], up)?,
        alpha,
        is_zero,
    })
}

/// Bilinear upsampling with corner-aligned grids: output pixel `i` samples
/// source position `i (n_in - 1) / (n_out - 1)`, so the corner nodes are hit exactly.
pub fn upsample_aligned(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w, "plane size");
    let axis = |n_in: usize, n_out: usize, i: usize| {
        if n_in == 1 || n_out == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 2);
        (lo, lo + 1, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(h, out_h, y);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(w, out_w, x);
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Blue-to-red colour for a map value in [0, 1].
pub fn colormap(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [v, 0.0, 1.0 - v]
}

/// 50/50 blend of a `[3, S, S]` frame with the coloured upsampled map.
pub fn overlay(map: &ActivationMap, frame: &Tensor<f32>) -> Result<Tensor<f32>> {
    let up = &map.upsampled;
    let &[h, w] = up.shape() else { unreachable!("2-d map") };
    if frame.shape() != [3, h, w] {
        return Err(CoreError::Input(format!(
            "overlay of a {h}×{w} map onto a frame of shape {:?}",
            frame.shape()
        )));
    }
    let hw = h * w;
    let data = (0..3)
        .flat_map(|ch| (0..hw).map(move |i| (ch, i)))
        .map(|(ch, i)| (0.5 * f64::from(frame.data()[ch * hw + i]) + 0.5 * colormap(up.data()[i])[ch]) as f32)
        .collect();
    Ok(Tensor::new(vec![3, h, w], data)?)
}

/// Tab-separated rows of the tap-resolution map, 6 decimals.
pub fn format_map_tsv(map: &ActivationMap) -> String {
    let &[_, w] = map.values.shape() else { unreachable!("2-d map") };
    map.values
        .data()
        .chunks(w)
        .map(|row| row.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join("\t") + "\n")
        .collect()
}
