use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduce;
use crate::tensor_store::{ensure_aligned, Checkpoint, Layout, TensorValues};

use super::delta::norm_epsilon;
use super::units::{plan_units, Granularity, Unit};

/// `wB` counts as collinear when its component orthogonal to `e1` is below
/// this fraction of its own length.
const COLLINEAR_REL: f64 = 1e-10;

/// A two-dimensional slice of weight space through `w0`, `wA` and `wB`.
#[derive(Clone, Debug)]
pub struct PlaneGrid {
    w0: Checkpoint,
    layout: Layout,
    flat: Unit,
    origin: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    a_norm: f64,
    b_perp_norm: f64,
    points: [(f64, f64); 3],
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlaneManifest {
    /// `|wA - w0|`, the length that `e1` normalizes.
    pub e1_norm: f64,
    /// Length of the part of `wB - w0` orthogonal to `e1`.
    pub e2_norm: f64,
    pub w0: (f64, f64),
    pub w_a: (f64, f64),
    pub w_b: (f64, f64),
    pub rows: usize,
    pub cols: usize,
    pub margin: f64,
    pub points: Vec<GridPoint>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

fn axis(coords: [f64; 3], margin: f64, n: usize) -> Vec<f64> {
    let lo = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = (hi - lo) * margin;
    linspace(lo - pad, hi + pad, n)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Builds the plane and a `rows x cols` grid over the bounding box of the
/// three projected points, padded on each side by `margin` times its extent.
pub fn plane_grid(
    w0: &Checkpoint,
    w_a: &Checkpoint,
    w_b: &Checkpoint,
    rows: usize,
    cols: usize,
    margin: f64,
) -> Result<PlaneGrid> {
    if rows < 2 || cols < 2 {
        return Err(Error::invalid(format!(
            "a plane grid needs at least 2 rows and 2 columns, got {rows}x{cols}"
        )));
    }
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!(
            "margin must be finite and >= 0, got {margin}"
        )));
    }
    ensure_aligned(w0, w_a, "wA")?;
    ensure_aligned(w0, w_b, "wB")?;

    let layout = w0.layout();
    let flat = plan_units(&layout, &Granularity::Global)
        .pop()
        .ok_or_else(|| Error::invalid("cannot build a plane over a checkpoint with no tensors"))?;
    let origin = flat.gather(&w0.values());
    let da = sub(&flat.gather(&w_a.values()), &origin);
    let db = sub(&flat.gather(&w_b.values()), &origin);

    let a_norm = reduce::norm(&da);
    if a_norm <= norm_epsilon(da.len()) {
        return Err(Error::Degenerate {
            unit: "plane".into(),
            detail: "wA equals w0, so the first basis direction is undefined".into(),
        });
    }
    let e1: Vec<f64> = da.iter().map(|x| x / a_norm).collect();

    // Two passes of classical Gram-Schmidt recover orthogonality lost to rounding.
    let mut perp = db.clone();
    for _ in 0..2 {
        let c = reduce::dot(&perp, &e1);
        for (p, e) in perp.iter_mut().zip(&e1) {
            *p -= c * e;
        }
    }
    let b_perp_norm = reduce::norm(&perp);
    let b_norm = reduce::norm(&db);
    if b_perp_norm <= norm_epsilon(db.len()).max(COLLINEAR_REL * b_norm) {
        return Err(Error::Degenerate {
            unit: "plane".into(),
            detail: "wB is collinear with w0 and wA; sweep the line with interpolate_pair instead"
                .into(),
        });
    }
    let e2: Vec<f64> = perp.iter().map(|x| x / b_perp_norm).collect();

    let points = [
        (0.0, 0.0),
        (a_norm, 0.0),
        (reduce::dot(&db, &e1), reduce::dot(&db, &e2)),
    ];
    let xs = axis([points[0].0, points[1].0, points[2].0], margin, cols);
    let ys = axis([points[0].1, points[1].1, points[2].1], margin, rows);

    Ok(PlaneGrid {
        w0: w0.clone(),
        layout,
        flat,
        origin,
        e1,
        e2,
        a_norm,
        b_perp_norm,
        points,
        xs,
        ys,
    })
}

impl PlaneGrid {
    pub fn e1(&self) -> &[f64] {
        &self.e1
    }

    pub fn e2(&self) -> &[f64] {
        &self.e2
    }

    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    /// Projected coordinates of `w0`, `wA` and `wB`.
    pub fn anchors(&self) -> [(f64, f64); 3] {
        self.points
    }

    /// Grid coordinates in row-major order as `(row, col, x, y)`.
    pub fn coordinates(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.xs.len() * self.ys.len());
        for (r, y) in self.ys.iter().enumerate() {
            for (c, x) in self.xs.iter().enumerate() {
                out.push((r, c, *x, *y));
            }
        }
        out
    }

    /// The checkpoint `w0 + x e1 + y e2`, stored in `w0`'s dtypes.
    pub fn materialize(&self, x: f64, y: f64) -> Result<Checkpoint> {
        if x == 0.0 && y == 0.0 {
            return Ok(self.w0.clone());
        }
        let flat: Vec<f64> = self
            .origin
            .iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(o, (a, b))| o + x * a + y * b)
            .collect();
        let mut values: TensorValues = self
            .layout
            .iter()
            .map(|(n, s)| (n.clone(), vec![0.0; s.iter().product()]))
            .collect();
        self.flat.scatter(&flat, &mut values);
        let w0 = &self.w0;
        let metadata = w0.metadata().cloned();
        let out = Checkpoint::from_values(&values, &self.layout, |n| {
            w0.get(n).expect("same layout").dtype()
        })?;
        Ok(match metadata {
            Some(m) => out.with_metadata(m),
            None => out,
        })
    }

    /// Coordinates of the orthogonal projection of `ckpt` onto the plane.
    pub fn project(&self, ckpt: &Checkpoint) -> Result<(f64, f64)> {
        ensure_aligned(&self.w0, ckpt, "checkpoint")?;
        let d = sub(&self.flat.gather(&ckpt.values()), &self.origin);
        Ok((reduce::dot(&d, &self.e1), reduce::dot(&d, &self.e2)))
    }

    /// Describes the grid; `file_name(row, col)` names each point's checkpoint.
    pub fn manifest(
        &self,
        margin: f64,
        file_name: impl Fn(usize, usize) -> String,
    ) -> PlaneManifest {
        PlaneManifest {
            e1_norm: self.a_norm,
            e2_norm: self.b_perp_norm,
            w0: self.points[0],
            w_a: self.points[1],
            w_b: self.points[2],
            rows: self.rows(),
            cols: self.cols(),
            margin,
            points: self
                .coordinates()
                .into_iter()
                .map(|(row, col, x, y)| GridPoint {
                    row,
                    col,
                    x,
                    y,
                    file: file_name(row, col),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::{DType, TensorRecord};

    fn ckpt(v: &[f64]) -> Checkpoint {
        Checkpoint::from_records([
            TensorRecord::from_f64("a", DType::F64, vec![2], &v[..2]).unwrap(),
            TensorRecord::from_f64("b", DType::F64, vec![], &v[2..3]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn basis_and_projections() {
        let w0 = ckpt(&[1.0, 1.0, 1.0]);
        let wa = ckpt(&[4.0, 5.0, 1.0]);
        let wb = ckpt(&[1.0, 1.0, 3.0]);
        let g = plane_grid(&w0, &wa, &wb, 3, 4, 0.1).unwrap();
        assert!(reduce::dot(g.e1(), g.e2()).abs() < 1e-10);
        let (ax, ay) = g.project(&wa).unwrap();
        assert!((ax - 5.0).abs() < 1e-12 && ay.abs() < 1e-12);
        assert_eq!(g.project(&w0).unwrap(), (0.0, 0.0));
        let (bx, by) = g.project(&wb).unwrap();
        assert_eq!((bx, by), (0.0, 2.0));
        assert_eq!(g.materialize(0.0, 0.0).unwrap(), w0);
        let back = g.materialize(5.0, 0.0).unwrap();
        for (x, y) in back.get("a").unwrap().to_f64().iter().zip([4.0, 5.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        let coords = g.coordinates();
        assert_eq!(coords.len(), 12);
        assert_eq!(coords[0].2, -0.5);
        assert_eq!(coords[3].2, 5.5);
        assert_eq!(coords[0].3, -0.2);
        assert_eq!(coords[11].3, 2.2);
    }

    #[test]
    fn degenerate_bases_rejected() {
        let w0 = ckpt(&[1.0, 1.0, 1.0]);
        let wa = ckpt(&[2.0, 3.0, 1.0]);
        let wb = ckpt(&[3.0, 5.0, 1.0]);
        assert!(plane_grid(&w0, &w0, &wb, 2, 2, 0.0).is_err());
        let err = plane_grid(&w0, &wa, &wb, 2, 2, 0.0).unwrap_err();
        assert!(err.to_string().contains("interpolate_pair"), "{err}");
        assert!(plane_grid(&w0, &wa, &ckpt(&[0.0, 0.0, 0.0]), 1, 2, 0.0).is_err());
    }

    #[test]
    fn manifest_lists_every_point() {
        let w0 = ckpt(&[0.0, 0.0, 0.0]);
        let g = plane_grid(
            &w0,
            &ckpt(&[1.0, 0.0, 0.0]),
            &ckpt(&[0.0, 1.0, 0.0]),
            2,
            3,
            0.0,
        )
        .unwrap();
        let m = g.manifest(0.0, |r, c| format!("p_{r}_{c}.safetensors"));
        assert_eq!(m.points.len(), 6);
        assert_eq!(m.points[5].file, "p_1_2.safetensors");
        assert_eq!(m.e1_norm, 1.0);
    }
}
