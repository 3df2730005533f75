use nalgebra::Vector2;

use crate::diffgeo::SurfacePoint;
use crate::error::{Error, Result};

/// Points this far outside every triangle (in domain units) are rejected.
pub const LOCATE_TOL: f64 = 1e-9;

/// Uniform-grid point location in a planar triangulation.
#[derive(Debug, Clone)]
pub struct PointLocator {
    faces: Vec<[usize; 3]>,
    uv: Vec<Vector2<f64>>,
    lo: Vector2<f64>,
    cell: Vector2<f64>,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

fn barycentric(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> [f64; 3] {
    let area = (b - a).perp(&(c - a));
    let l0 = (b - p).perp(&(c - p)) / area;
    let l1 = (c - p).perp(&(a - p)) / area;
    [l0, l1, 1.0 - l0 - l1]
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + t * d)).norm()
}

impl PointLocator {
    pub fn new(faces: &[[usize; 3]], uv: &[Vector2<f64>]) -> Self {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in uv {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let side = ((faces.len() as f64).sqrt().ceil() as usize).max(1);
        let ext = (hi - lo).map(|e| if e > 0.0 { e } else { 1.0 });
        let cell = ext / side as f64;
        let dims = (side, side);
        let mut buckets = vec![Vec::new(); side * side];
        let clamp = |x: f64, n: usize| (x.floor().max(0.0) as usize).min(n - 1);
        for (fi, f) in faces.iter().enumerate() {
            let mut flo = Vector2::repeat(f64::INFINITY);
            let mut fhi = Vector2::repeat(f64::NEG_INFINITY);
            for &v in f {
                flo = flo.inf(&uv[v]);
                fhi = fhi.sup(&uv[v]);
            }
            let (x0, x1) = (clamp((flo.x - lo.x) / cell.x, side), clamp((fhi.x - lo.x) / cell.x, side));
            let (y0, y1) = (clamp((flo.y - lo.y) / cell.y, side), clamp((fhi.y - lo.y) / cell.y, side));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    buckets[y * side + x].push(fi);
                }
            }
        }
        Self {
            faces: faces.to_vec(),
            uv: uv.to_vec(),
            lo,
            cell,
            dims,
            buckets,
        }
    }

    fn distance_outside(&self, fi: usize, p: &Vector2<f64>, bary: &[f64; 3]) -> f64 {
        if bary.iter().all(|&b| b >= 0.0) {
            return 0.0;
        }
        let f = self.faces[fi];
        (0..3)
            .map(|k| segment_distance(p, &self.uv[f[k]], &self.uv[f[(k + 1) % 3]]))
            .fold(f64::INFINITY, f64::min)
    }

    fn best_of(&self, cands: impl Iterator<Item = usize>, p: &Vector2<f64>) -> Option<(usize, [f64; 3], f64)> {
        let mut best: Option<(usize, [f64; 3], f64, f64)> = None;
        for fi in cands {
            let f = self.faces[fi];
            let bary = barycentric(p, &self.uv[f[0]], &self.uv[f[1]], &self.uv[f[2]]);
            let score = bary.iter().copied().fold(f64::INFINITY, f64::min);
            let better = match &best {
                None => true,
                Some(b) => score > b.3 || (score == b.3 && fi < b.0),
            };
            if better {
                best = Some((fi, bary, 0.0, score));
            }
            if score >= 0.0 {
                break;
            }
        }
        best.map(|(fi, bary, _, _)| (fi, bary, self.distance_outside(fi, p, &bary)))
    }

    /// Face and barycentric coordinates of `p`, clamped onto the face when
    /// `p` lies outside by at most [`LOCATE_TOL`].
    pub fn locate(&self, p: &Vector2<f64>) -> Result<SurfacePoint> {
        let (nx, ny) = self.dims;
        let gx = ((p.x - self.lo.x) / self.cell.x).floor() as i64;
        let gy = ((p.y - self.lo.y) / self.cell.y).floor() as i64;
        let mut cands: Vec<usize> = Vec::new();
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let (x, y) = (gx + dx, gy + dy);
                if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                    cands.extend(&self.buckets[y as usize * nx + x as usize]);
                }
            }
        }
        // the home cell first, so an inside hit there ends the scan early
        let mut found = self.best_of(cands.iter().copied(), p);
        if found.is_none_or(|f| f.2 > LOCATE_TOL) {
            found = self.best_of(0..self.faces.len(), p);
        }
        match found {
            Some((face, bary, dist)) if dist <= LOCATE_TOL => {
                let mut b = bary.map(|x| x.clamp(0.0, 1.0));
                let s: f64 = b.iter().sum();
                b.iter_mut().for_each(|x| *x /= s);
                Ok(SurfacePoint { face, bary: b })
            }
            _ => Err(Error::PointLocation { u: p.x, v: p.y }),
        }
    }
}
