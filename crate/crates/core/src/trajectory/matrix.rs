use serde::{Deserialize, Serialize};

use super::{Point, TrajectoryError};

/// Marks a key point that is absent (never tracked, occluded, or gone).
pub const SENTINEL: Point = [-1.0, -1.0];

/// `points × frames` grid of normalized coordinates. Every cell is either in
/// `[0, 1]²` or exactly [`SENTINEL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct TrajectoryMatrix {
    points: usize,
    frames: usize,
    cells: Vec<Point>,
}

/// JSON form: `coords[j][k] = [x, y]`.
#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    points: usize,
    frames: usize,
    coords: Vec<Vec<Point>>,
}

impl TryFrom<MatrixRepr> for TrajectoryMatrix {
    type Error = TrajectoryError;

    fn try_from(r: MatrixRepr) -> Result<Self, Self::Error> {
        if r.coords.len() != r.points || r.coords.iter().any(|row| row.len() != r.frames) {
            return Err(TrajectoryError::BadShape(format!(
                "expected {}x{} coords",
                r.points, r.frames
            )));
        }
        TrajectoryMatrix::from_cells(r.points, r.frames, r.coords.concat())
    }
}

impl From<TrajectoryMatrix> for MatrixRepr {
    fn from(m: TrajectoryMatrix) -> Self {
        MatrixRepr {
            points: m.points,
            frames: m.frames,
            coords: if m.frames == 0 {
                vec![Vec::new(); m.points]
            } else {
                m.cells.chunks(m.frames).map(<[Point]>::to_vec).collect()
            },
        }
    }
}

pub(crate) fn cell_is_valid(c: &Point) -> bool {
    *c == SENTINEL || c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl TrajectoryMatrix {
    pub fn sentinel(points: usize, frames: usize) -> Self {
        TrajectoryMatrix {
            points,
            frames,
            cells: vec![SENTINEL; points * frames],
        }
    }

    /// Row-major cells (`j * frames + k`), validated.
    pub fn from_cells(
        points: usize,
        frames: usize,
        cells: Vec<Point>,
    ) -> Result<Self, TrajectoryError> {
        if cells.len() != points * frames {
            return Err(TrajectoryError::BadShape(format!(
                "{} cells for {points}x{frames}",
                cells.len()
            )));
        }
        let m = TrajectoryMatrix {
            points,
            frames,
            cells,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn cells(&self) -> &[Point] {
        &self.cells
    }

    pub fn get(&self, point: usize, frame: usize) -> Point {
        self.cells[point * self.frames + frame]
    }

    pub(crate) fn set(&mut self, point: usize, frame: usize, v: Point) {
        debug_assert!(cell_is_valid(&v));
        self.cells[point * self.frames + frame] = v;
    }

    /// Flattened `[x, y, x, y, ...]` in cell order.
    pub fn flat(&self) -> Vec<f64> {
        self.cells.iter().flat_map(|c| c.iter().copied()).collect()
    }

    pub fn real_cells(&self) -> usize {
        self.cells.iter().filter(|c| **c != SENTINEL).count()
    }

    /// Checks sentinel exclusivity on every cell.
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        match self.cells.iter().position(|c| !cell_is_valid(c)) {
            None => Ok(()),
            Some(i) => Err(TrajectoryError::MixedCell {
                point: i / self.frames.max(1),
                frame: i % self.frames.max(1),
            }),
        }
    }
}
