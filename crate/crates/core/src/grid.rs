//! Uniform rectilinear grids and the scalar/vector sample containers that live on them.
//!
//! Samples are stored x-fastest: the flat index of node `(i, j, k)` is
//! `i + nx * (j + ny * k)`.
//!
//! Periodic grids hold `n` samples per axis at `origin + i * l / n`. All other
//! domain kinds sample the closed interval `[origin, origin + l]` with `n`
//! nodes, so both faces are present and the spacing is `l / (n - 1)`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Periodic,
    HalfSpaceTruncated,
    BoxDirichlet,
    WholeSpaceTruncated,
}

impl DomainKind {
    pub fn is_periodic(self) -> bool {
        matches!(self, DomainKind::Periodic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    #[serde(default)]
    pub origin: [f64; 3],
    pub domain_kind: DomainKind,
}

impl GridSpec {
    pub fn new(n: [usize; 3], l: [f64; 3], domain_kind: DomainKind) -> Result<Self> {
        Self::with_origin(n, l, [0.0; 3], domain_kind)
    }

    pub fn with_origin(
        n: [usize; 3],
        l: [f64; 3],
        origin: [f64; 3],
        domain_kind: DomainKind,
    ) -> Result<Self> {
        let spec = GridSpec {
            nx: n[0],
            ny: n[1],
            nz: n[2],
            lx: l[0],
            ly: l[1],
            lz: l[2],
            origin,
            domain_kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Periodic cube `[0, l)^3` with `n` samples per axis.
    pub fn periodic_cube(n: usize, l: f64) -> Result<Self> {
        Self::new([n; 3], [l; 3], DomainKind::Periodic)
    }

    /// Closed box `[lo, hi]` sampled with `n` nodes per axis.
    pub fn closed_box(
        n: [usize; 3],
        lo: [f64; 3],
        hi: [f64; 3],
        domain_kind: DomainKind,
    ) -> Result<Self> {
        if domain_kind.is_periodic() {
            return Err(Error::InvalidGrid(
                "closed_box cannot build a periodic grid".into(),
            ));
        }
        let l = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        Self::with_origin(n, l, lo, domain_kind)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, n) in [('x', self.nx), ('y', self.ny), ('z', self.nz)] {
            if n < 4 {
                return Err(Error::GridTooSmall { axis, n });
            }
            if self.domain_kind.is_periodic() && n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "periodic grids need even sample counts, n{axis} = {n}"
                )));
            }
        }
        for (axis, l) in [('x', self.lx), ('y', self.ly), ('z', self.lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "edge length l{axis} = {l} must be positive and finite"
                )));
            }
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn lengths(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_periodic(&self) -> bool {
        self.domain_kind.is_periodic()
    }

    pub fn spacing(&self) -> [f64; 3] {
        let d = self.dims();
        let l = self.lengths();
        let denom = |n: usize| {
            if self.is_periodic() {
                n as f64
            } else {
                (n - 1) as f64
            }
        };
        [l[0] / denom(d[0]), l[1] / denom(d[1]), l[2] / denom(d[2])]
    }

    pub fn min_spacing(&self) -> f64 {
        let h = self.spacing();
        h[0].min(h[1]).min(h[2])
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [i, j, k]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing()[axis]
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        let h = self.spacing();
        [
            self.origin[0] + i as f64 * h[0],
            self.origin[1] + j as f64 * h[1],
            self.origin[2] + k as f64 * h[2],
        ]
    }

    /// One-dimensional quadrature weights along `axis`: rectangle rule on
    /// periodic grids, composite trapezoid otherwise.
    pub fn weights_1d(&self, axis: usize) -> Vec<f64> {
        let n = self.dims()[axis];
        let h = self.spacing()[axis];
        let mut w = vec![h; n];
        if !self.is_periodic() {
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
        }
        w
    }

    /// Whether the point lies inside the closed sampled box (periodic grids contain everything).
    pub fn contains(&self, p: [f64; 3]) -> bool {
        if self.is_periodic() {
            return true;
        }
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= self.origin[a] + self.lengths()[a])
    }

    pub fn same_grid(&self, other: &GridSpec) -> bool {
        self == other
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(ScalarField { spec, values })
    }

    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        let values = (0..spec.len())
            .into_par_iter()
            .map(|idx| f(spec.point(idx)))
            .collect();
        ScalarField { spec, values }
    }

    pub fn max_abs(&self) -> f64 {
        summation::max_abs(&self.values)
    }

    pub fn mean(&self) -> f64 {
        summation::sum_slice(&self.values) / self.values.len() as f64
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64 + Sync,
    ) -> Result<ScalarField> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(ScalarField {
            spec: self.spec,
            values,
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a - b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub spec: GridSpec,
    pub components: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = spec.len();
        VectorField {
            spec,
            components: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn from_components(x: ScalarField, y: ScalarField, z: ScalarField) -> Result<Self> {
        if x.spec != y.spec || x.spec != z.spec {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField {
            spec: x.spec,
            components: [x.values, y.values, z.values],
        })
    }

    pub fn from_fn<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn([f64; 3]) -> [f64; 3] + Sync,
    {
        let samples: Vec<[f64; 3]> = (0..spec.len())
            .into_par_iter()
            .map(|idx| f(spec.point(idx)))
            .collect();
        let mut out = VectorField::zeros(spec);
        for (idx, s) in samples.into_iter().enumerate() {
            out.components[0][idx] = s[0];
            out.components[1][idx] = s[1];
            out.components[2][idx] = s[2];
        }
        out
    }

    pub fn component(&self, c: usize) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.components[c].clone(),
        }
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [
            self.components[0][idx],
            self.components[1][idx],
            self.components[2][idx],
        ]
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let values = (0..self.spec.len())
            .into_par_iter()
            .map(|i| {
                let v = self.at(i);
                (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
            })
            .collect();
        ScalarField {
            spec: self.spec,
            values,
        }
    }

    /// Max over nodes of the Euclidean magnitude.
    pub fn max_norm(&self) -> f64 {
        summation::deterministic_max(self.spec.len(), |i| {
            let v = self.at(i);
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        })
    }

    /// Max over nodes and components of the absolute value.
    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .map(|c| summation::max_abs(c))
            .fold(0.0, f64::max)
    }

    /// Total vorticity/velocity: the componentwise sum `x + y + z`.
    pub fn component_sum(&self) -> ScalarField {
        let values = (0..self.spec.len()).into_par_iter().map(|i| {
            let v = self.at(i);
            v[0] + v[1] + v[2]
        });
        ScalarField {
            spec: self.spec,
            values: values.collect(),
        }
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self
            .components
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
        {
            Ok(())
        } else {
            Err(Error::NonFinite {
                context: context.to_string(),
            })
        }
    }

    pub fn scale(&self, a: f64) -> VectorField {
        let mut out = self.clone();
        for c in out.components.iter_mut() {
            c.par_iter_mut().for_each(|v| *v *= a);
        }
        out
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &VectorField) -> Result<VectorField> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        let mut out = self.clone();
        for (dst, src) in out.components.iter_mut().zip(other.components.iter()) {
            dst.par_iter_mut()
                .zip(src.par_iter())
                .for_each(|(d, s)| *d += a * s);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &VectorField) -> Result<VectorField> {
        self.axpy(1.0, other)
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    nx: usize,
    ny: usize,
    nz: usize,
    lx: f64,
    ly: f64,
    lz: f64,
    domain_kind: DomainKind,
    components: usize,
    #[serde(default, skip_serializing_if = "is_zero_origin")]
    origin: [f64; 3],
}

fn is_zero_origin(o: &[f64; 3]) -> bool {
    o.iter().all(|&v| v == 0.0)
}

/// Writes a raw field dump: one JSON header line, then every component's
/// samples as little-endian `f64`, x-fastest, component after component.
pub fn write_dump<W: Write>(mut w: W, spec: &GridSpec, components: &[&[f64]]) -> Result<()> {
    let header = DumpHeader {
        nx: spec.nx,
        ny: spec.ny,
        nz: spec.nz,
        lx: spec.lx,
        ly: spec.ly,
        lz: spec.lz,
        domain_kind: spec.domain_kind,
        components: components.len(),
        origin: spec.origin,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for c in components {
        if c.len() != spec.len() {
            return Err(Error::InvalidGrid(
                "component length does not match grid".into(),
            ));
        }
        let mut buf = Vec::with_capacity(8 * c.len());
        for v in c.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn write_vector_dump<W: Write>(w: W, field: &VectorField) -> Result<()> {
    let comps: Vec<&[f64]> = field.components.iter().map(|c| c.as_slice()).collect();
    write_dump(w, &field.spec, &comps)
}

pub fn write_scalar_dump<W: Write>(w: W, field: &ScalarField) -> Result<()> {
    write_dump(w, &field.spec, &[&field.values])
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump<R: BufRead>(mut r: R) -> Result<(GridSpec, Vec<Vec<f64>>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())?;
    let spec = GridSpec::with_origin(
        [header.nx, header.ny, header.nz],
        [header.lx, header.ly, header.lz],
        header.origin,
        header.domain_kind,
    )?;
    let mut comps = Vec::with_capacity(header.components);
    let mut buf = vec![0u8; 8 * spec.len()];
    for _ in 0..header.components {
        r.read_exact(&mut buf)?;
        comps.push(
            buf.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        );
    }
    Ok((spec, comps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_small_and_odd_grids() {
        assert!(matches!(
            GridSpec::periodic_cube(2, 1.0),
            Err(Error::GridTooSmall { .. })
        ));
        assert!(matches!(
            GridSpec::periodic_cube(5, 1.0),
            Err(Error::InvalidGrid(_))
        ));
        assert!(GridSpec::new([5, 5, 5], [1.0; 3], DomainKind::BoxDirichlet).is_ok());
        assert!(GridSpec::new([4, 4, 4], [0.0, 1.0, 1.0], DomainKind::Periodic).is_err());
    }

    #[test]
    fn spacing_conventions() {
        let p = GridSpec::periodic_cube(8, 2.0 * PI).unwrap();
        assert_eq!(p.spacing()[0], 2.0 * PI / 8.0);
        let b = GridSpec::closed_box(
            [5, 9, 17],
            [0.0; 3],
            [1.0, 1.0, 1.0],
            DomainKind::BoxDirichlet,
        )
        .unwrap();
        assert_eq!(b.spacing(), [0.25, 0.125, 0.0625]);
        assert_eq!(b.coord(0, 4), 1.0);
    }

    #[test]
    fn index_round_trip() {
        let s = GridSpec::new([4, 6, 8], [1.0; 3], DomainKind::Periodic).unwrap();
        for idx in 0..s.len() {
            let [i, j, k] = s.unravel(idx);
            assert_eq!(s.index(i, j, k), idx);
        }
    }

    #[test]
    fn dump_round_trip() {
        let s = GridSpec::new([4, 4, 6], [1.0, 2.0, 3.0], DomainKind::Periodic).unwrap();
        let f = VectorField::from_fn(s, |p| [p[0], p[1] * 2.0, -p[2]]);
        let mut bytes = Vec::new();
        write_vector_dump(&mut bytes, &f).unwrap();
        let first_line = bytes.split(|&b| b == b'\n').next().unwrap();
        let header: serde_json::Value = serde_json::from_slice(first_line).unwrap();
        assert_eq!(header["components"], 3);
        assert_eq!(header["domain_kind"], "Periodic");
        assert_eq!(bytes.len(), first_line.len() + 1 + 3 * 8 * s.len());
        let (spec, comps) = read_dump(std::io::Cursor::new(bytes)).unwrap();
        assert_eq!(spec, s);
        assert_eq!(comps[1], f.components[1]);
    }
}
