use serde::{Deserialize, Serialize};

use super::TrajectoryError;

/// Binary first-frame object mask, stored as row-major run lengths that
/// alternate background/foreground starting with background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MaskRepr", into = "MaskRepr")]
pub struct Mask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    #[serde(skip)]
    bits: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    width: u32,
    height: u32,
    rle: Vec<u32>,
}

impl TryFrom<MaskRepr> for Mask {
    type Error = TrajectoryError;

    fn try_from(r: MaskRepr) -> Result<Self, Self::Error> {
        Mask::from_runs(r.width, r.height, r.rle)
    }
}

impl From<Mask> for MaskRepr {
    fn from(m: Mask) -> Self {
        MaskRepr {
            width: m.width,
            height: m.height,
            rle: m.runs,
        }
    }
}

impl Mask {
    pub fn from_runs(width: u32, height: u32, runs: Vec<u32>) -> Result<Self, TrajectoryError> {
        let cells = width as u64 * height as u64;
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        if total != cells {
            return Err(TrajectoryError::BadRle {
                expected: cells,
                got: total,
            });
        }
        let mut bits = Vec::with_capacity(cells as usize);
        for (i, &r) in runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
        }
        Ok(Mask {
            width,
            height,
            runs,
            bits,
        })
    }

    /// Builds a mask from row-major foreground flags.
    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Result<Self, TrajectoryError> {
        let cells = width as u64 * height as u64;
        if bits.len() as u64 != cells {
            return Err(TrajectoryError::BadRle {
                expected: cells,
                got: bits.len() as u64,
            });
        }
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0u32;
        for &b in bits {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        Mask::from_runs(width, height, runs)
    }

    /// Axis-aligned rectangle `[x0, x1) × [y0, y1)`, clipped to the frame.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        let bits: Vec<bool> = (0..height)
            .flat_map(|y| (0..width).map(move |x| x >= x0 && x < x1 && y >= y0 && y < y1))
            .collect();
        Mask::from_bitmap(width, height, &bits).expect("bitmap sized from dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn area_fraction(&self) -> f64 {
        let cells = self.width as u64 * self.height as u64;
        if cells == 0 {
            0.0
        } else {
            self.area() as f64 / cells as f64
        }
    }

    /// Whether the pixel containing `(x, y)` is foreground. Points outside the
    /// frame are never contained.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !(x >= 0.0 && y >= 0.0) {
            return false;
        }
        let (px, py) = (x.floor() as u64, y.floor() as u64);
        if px >= self.width as u64 || py >= self.height as u64 {
            return false;
        }
        self.bits[(py * self.width as u64 + px) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_must_tile_frame() {
        assert!(Mask::from_runs(2, 2, vec![1, 2]).is_err());
        let m = Mask::from_runs(2, 2, vec![1, 2, 1]).unwrap();
        assert_eq!(m.bits(), &[false, true, true, false]);
        assert_eq!(m.area(), 2);
    }

    #[test]
    fn bitmap_starting_with_foreground_gets_zero_run() {
        let m = Mask::from_bitmap(3, 1, &[true, true, false]).unwrap();
        assert_eq!(m.runs(), &[0, 2, 1]);
    }

    #[test]
    fn containment_uses_pixel_cells() {
        let m = Mask::rect(10, 10, 0, 0, 5, 10);
        assert!(m.contains(4.9, 3.0));
        assert!(!m.contains(5.0, 3.0));
        assert!(!m.contains(-0.1, 3.0));
        assert!(!m.contains(2.0, 10.0));
        assert!(!m.contains(f64::NAN, 1.0));
        assert_eq!(m.area_fraction(), 0.5);
    }

    #[test]
    fn json_schema() {
        let m: Mask = serde_json::from_str(r#"{"width":2,"height":1,"rle":[1,1]}"#).unwrap();
        assert!(m.contains(1.5, 0.5));
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"width":2,"height":1,"rle":[1,1]}"#
        );
        assert!(serde_json::from_str::<Mask>(r#"{"width":2,"height":1,"rle":[3]}"#).is_err());
    }
}
