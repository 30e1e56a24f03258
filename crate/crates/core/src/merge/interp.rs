use crate::error::{Error, Result};
use crate::tensor_store::{ensure_aligned, Checkpoint, DType};

fn blend(a: &Checkpoint, b: &Checkpoint, t: f64, dtype_from: &Checkpoint) -> Result<Checkpoint> {
    let av = a.values();
    let bv = b.values();
    let values = av
        .iter()
        .map(|(name, x)| {
            let y = &bv[name];
            let v = x
                .iter()
                .zip(y)
                .map(|(x, y)| t * x + (1.0 - t) * y)
                .collect();
            (name.clone(), v)
        })
        .collect();
    let dtype = |n: &str| -> DType { dtype_from.get(n).expect("aligned").dtype() };
    Ok(Checkpoint::from_values(&values, &a.layout(), dtype)?)
}

fn check_ratio(name: &str, t: f64, allow_extrapolation: bool) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::invalid(format!("{name} must be finite, got {t}")));
    }
    if !allow_extrapolation && !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!(
            "{name} = {t} lies outside [0, 1]; extrapolation was not enabled"
        )));
    }
    Ok(())
}

/// `t * a + (1 - t) * b`, stored in `a`'s dtypes. `t = 1` and `t = 0` return
/// exact copies of `a` and `b`.
pub fn interpolate_pair(
    a: &Checkpoint,
    b: &Checkpoint,
    t: f64,
    allow_extrapolation: bool,
) -> Result<Checkpoint> {
    ensure_aligned(a, b, "second checkpoint")?;
    check_ratio("t", t, allow_extrapolation)?;
    if t == 1.0 {
        return Ok(a.clone());
    }
    if t == 0.0 {
        return Ok(b.clone());
    }
    blend(a, b, t, a)
}

/// `alpha * model + (1 - alpha) * anchor`, stored in the anchor's dtypes.
/// The endpoints return exact copies of the respective input.
pub fn wise_ft(
    anchor: &Checkpoint,
    model: &Checkpoint,
    alpha: f64,
    allow_extrapolation: bool,
) -> Result<Checkpoint> {
    ensure_aligned(anchor, model, "fine-tuned model")?;
    check_ratio("alpha", alpha, allow_extrapolation)?;
    if alpha == 0.0 {
        return Ok(anchor.clone());
    }
    if alpha == 1.0 {
        return Ok(model.clone());
    }
    blend(model, anchor, alpha, anchor)
}
