use crate::error::SignalError;
use crate::tensor::ValueGrid;

/// Normalized pixel coordinates, `2 x (width * height)`.
///
/// Row 0 holds x (column position), row 1 holds y (row position); both are
/// spaced linearly over `[-1, 1]` inclusive. Column `j` is pixel `j` of the
/// row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    pub width: usize,
    pub height: usize,
    pub coords: ValueGrid,
}

// Integer numerator keeps the axis exactly antisymmetric and the ends at ±1.
fn axis(n: usize, i: usize) -> f64 {
    ((2 * i) as f64 - (n - 1) as f64) / (n - 1) as f64
}

pub fn make_grid(width: usize, height: usize) -> Result<CoordinateGrid, SignalError> {
    if width < 2 || height < 2 {
        return Err(SignalError::DegenerateGrid { width, height });
    }
    let n = width * height;
    let coords = ValueGrid::from_fn(2, n, |r, j| {
        if r == 0 {
            axis(width, j % width)
        } else {
            axis(height, j / width)
        }
    });
    Ok(CoordinateGrid { width, height, coords })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_corners() {
        let g = make_grid(2, 2).unwrap();
        assert_eq!(g.coords.row(0), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(g.coords.row(1), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn three_wide_row() {
        let g = make_grid(3, 2).unwrap();
        assert_eq!(&g.coords.row(0)[..3], &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn closed_under_negation() {
        for (w, h) in [(5, 4), (128, 128), (7, 3)] {
            let g = make_grid(w, h).unwrap();
            let mut pts: Vec<(f64, f64)> = (0..w * h).map(|j| (g.coords.get(0, j), g.coords.get(1, j))).collect();
            let mut neg: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (-x, y)).collect();
            let key = |a: &(f64, f64), b: &(f64, f64)| a.partial_cmp(b).unwrap();
            pts.sort_by(key);
            neg.sort_by(key);
            assert_eq!(pts, neg);
        }
    }

    #[test]
    fn column_is_pixel_index() {
        let (w, h) = (6, 5);
        let g = make_grid(w, h).unwrap();
        for j in 0..w * h {
            let (x, y) = (j % w, j / w);
            let px = ((g.coords.get(0, j) + 1.0) / 2.0 * (w - 1) as f64).round() as usize;
            let py = ((g.coords.get(1, j) + 1.0) / 2.0 * (h - 1) as f64).round() as usize;
            assert_eq!((px, py), (x, y));
        }
        assert!(g.coords.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn degenerate_sizes() {
        assert!(matches!(make_grid(1, 5), Err(SignalError::DegenerateGrid { .. })));
    }
}
