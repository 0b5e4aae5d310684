use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Motion, SweepEngine, SweepError, WarmStartCache};

const MAGIC: &str = "SWEPT_SDF_GRID v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

/// Swept SDF sampled on a regular lattice, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct SweptGrid {
    pub dims: [usize; 3],
    pub origin: Vector3<f64>,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl SweptGrid {
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.linear_index(i, j, k)]
    }
}

/// Evaluates `f*` at every lattice point. Each z slice is processed with its
/// own warm-start cache along x scanlines, so results do not depend on the
/// thread count. Warm results are always checked against the seed samples.
pub fn sweep_grid<M: Motion + ?Sized>(
    engine: &SweepEngine<'_, M>,
    bounds: &GridBounds,
    resolution: f64,
) -> Result<SweptGrid, SweepError> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(SweepError::InvalidResolution(resolution));
    }
    let extent = bounds.hi - bounds.lo;
    if !extent.iter().all(|e| e.is_finite() && *e >= 0.0) {
        return Err(SweepError::InvalidBounds);
    }
    let dims: [usize; 3] = std::array::from_fn(|k| (extent[k] / resolution + 1e-9).floor() as usize + 1);
    let grid = SweptGrid { dims, origin: bounds.lo, spacing: resolution, values: Vec::new() };

    let slices: Vec<Vec<f64>> = (0..dims[2])
        .into_par_iter()
        .map(|k| {
            let mut cache = WarmStartCache::new();
            let mut out = Vec::with_capacity(dims[0] * dims[1]);
            for j in 0..dims[1] {
                cache.forget_last();
                for i in 0..dims[0] {
                    out.push(engine.query(&grid.point(i, j, k), None, &mut cache, true)?.f_star);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, SweepError>>()?;
    Ok(SweptGrid { values: slices.concat(), ..grid })
}

pub fn write_grid<W: Write>(grid: &SweptGrid, mut out: W) -> io::Result<()> {
    let [nx, ny, nz] = grid.dims;
    let o = grid.origin;
    write!(
        out,
        "{MAGIC}\ndims {nx} {ny} {nz}\norigin {:?} {:?} {:?}\nspacing {:?}\nencoding f32le\nend_header\n",
        o.x, o.y, o.z, grid.spacing
    )?;
    let mut bytes = Vec::with_capacity(4 * grid.values.len());
    for v in &grid.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&bytes)
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn read_grid<R: BufRead>(mut input: R) -> io::Result<SweptGrid> {
    let mut line = String::new();
    let mut next = |input: &mut R| -> io::Result<String> {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(invalid("truncated grid header"));
        }
        Ok(line.trim_end().to_string())
    };
    if next(&mut input)? != MAGIC {
        return Err(invalid("not a swept SDF grid"));
    }
    let mut dims = None;
    let mut origin = None;
    let mut spacing = None;
    loop {
        let l = next(&mut input)?;
        let mut parts = l.split_whitespace();
        let key = parts.next().unwrap_or("");
        let nums: Vec<&str> = parts.collect();
        let floats = || nums.iter().map(|s| s.parse::<f64>().map_err(|e| invalid(e.to_string()))).collect::<io::Result<Vec<_>>>();
        match key {
            "dims" => {
                let d = nums.iter().map(|s| s.parse::<usize>().map_err(|e| invalid(e.to_string()))).collect::<io::Result<Vec<_>>>()?;
                dims = Some(<[usize; 3]>::try_from(d).map_err(|_| invalid("dims needs 3 values"))?);
            }
            "origin" => {
                let v = floats()?;
                if v.len() != 3 {
                    return Err(invalid("origin needs 3 values"));
                }
                origin = Some(Vector3::new(v[0], v[1], v[2]));
            }
            "spacing" => spacing = floats()?.first().copied(),
            "encoding" if nums == ["f32le"] => {}
            "encoding" => return Err(invalid(format!("unsupported encoding {l}"))),
            "end_header" => break,
            _ => return Err(invalid(format!("unexpected header line {l:?}"))),
        }
    }
    let dims = dims.ok_or_else(|| invalid("missing dims"))?;
    let origin = origin.ok_or_else(|| invalid("missing origin"))?;
    let spacing = spacing.ok_or_else(|| invalid("missing spacing"))?;
    let n = dims.iter().product::<usize>();
    let mut bytes = vec![0u8; 4 * n];
    input.read_exact(&mut bytes)?;
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    Ok(SweptGrid { dims, origin, spacing, values })
}

/// Rows `x,y,z,f_star` of the z slice `k`.
pub fn write_slice_csv<W: Write>(grid: &SweptGrid, k: usize, mut out: W) -> io::Result<()> {
    writeln!(out, "x,y,z,f_star")?;
    for j in 0..grid.dims[1] {
        for i in 0..grid.dims[0] {
            let p = grid.point(i, j, k);
            writeln!(out, "{},{},{},{}", p.x, p.y, p.z, grid.get(i, j, k))?;
        }
    }
    Ok(())
}
