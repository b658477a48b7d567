use serde::{Deserialize, Serialize};

/// A plateau of equal values whose 8-neighbours are all strictly larger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMinimum {
    /// `(i1, i2)` indices of the plateau cells, in scan order.
    pub cells: Vec<(usize, usize)>,
    /// Parameter values of the first cell.
    pub location: [f64; 2],
    pub value: f64,
    /// No plateau cell lies on the edge of the sweep grid.
    pub interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub count: usize,
    pub interior_count: usize,
    pub minima: Vec<LocalMinimum>,
}

impl Census {
    pub fn interior(&self) -> impl Iterator<Item = &LocalMinimum> {
        self.minima.iter().filter(|m| m.interior)
    }
}

/// Local minima of `values[i1 * p2.len() + i2]` over the grid `p1 × p2`.
/// Equal neighbouring values are merged into one plateau first; non-finite
/// cells are never minima.
pub fn census(values: &[f64], p1: &[f64], p2: &[f64]) -> Census {
    let (n1, n2) = (p1.len(), p2.len());
    assert_eq!(values.len(), n1 * n2, "census grid shape");
    let at = |i: usize, j: usize| values[i * n2 + j];
    let neighbours = |i: usize, j: usize| {
        let mut out = Vec::with_capacity(8);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < n1 && (b as usize) < n2 {
                    out.push((a as usize, b as usize));
                }
            }
        }
        out
    };
    let mut seen = vec![false; values.len()];
    let mut minima = Vec::new();
    for i in 0..n1 {
        for j in 0..n2 {
            if seen[i * n2 + j] || !at(i, j).is_finite() {
                continue;
            }
            let v = at(i, j);
            let mut plateau = vec![(i, j)];
            seen[i * n2 + j] = true;
            let mut head = 0;
            let mut is_min = true;
            while head < plateau.len() {
                let (a, b) = plateau[head];
                head += 1;
                for (c, d) in neighbours(a, b) {
                    let w = at(c, d);
                    if w == v {
                        if !seen[c * n2 + d] {
                            seen[c * n2 + d] = true;
                            plateau.push((c, d));
                        }
                    } else if !(w > v) {
                        is_min = false;
                    }
                }
            }
            if is_min {
                plateau.sort_unstable();
                let interior = plateau.iter().all(|&(a, b)| a > 0 && b > 0 && a + 1 < n1 && b + 1 < n2);
                let (a, b) = plateau[0];
                minima.push(LocalMinimum { location: [p1[a], p2[b]], value: v, interior, cells: plateau });
            }
        }
    }
    Census { count: minima.len(), interior_count: minima.iter().filter(|m| m.interior).count(), minima }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn single_bowl() {
        let (p1, p2) = (axis(7), axis(5));
        let v: Vec<f64> =
            (0..35).map(|k| ((k / 5) as f64 - 3.0).powi(2) + ((k % 5) as f64 - 2.0).powi(2)).collect();
        let c = census(&v, &p1, &p2);
        assert_eq!((c.count, c.interior_count), (1, 1));
        assert_eq!(c.minima[0].location, [3.0, 2.0]);
    }

    #[test]
    fn degenerate_grid_has_one_minimum() {
        let c = census(&[5.0], &[1.0], &[2.0]);
        assert_eq!(c.count, 1);
        assert!(!c.minima[0].interior);
    }

    #[test]
    fn plateaus_merge() {
        // Flat valley along the middle row, walls elsewhere.
        let (p1, p2) = (axis(3), axis(4));
        let v = [5.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0, 5.0];
        let c = census(&v, &p1, &p2);
        assert_eq!(c.count, 1);
        assert_eq!(c.minima[0].cells.len(), 4);
        assert!(!c.minima[0].interior);
        let flat = census(&[2.0; 9], &axis(3), &axis(3));
        assert_eq!(flat.count, 1);
    }

    #[test]
    fn boundary_and_interior_minima_and_infinities() {
        let (p1, p2) = (axis(4), axis(4));
        #[rustfmt::skip]
        let v = [
            0.0, 3.0, 3.0, 3.0,
            3.0, 3.0, 3.0, 3.0,
            3.0, 3.0, 1.0, 3.0,
            3.0, 3.0, 3.0, f64::INFINITY,
        ];
        let c = census(&v, &p1, &p2);
        assert_eq!((c.count, c.interior_count), (2, 1));
        assert_eq!(c.interior().next().unwrap().location, [2.0, 2.0]);
    }

    proptest! {
        #[test]
        fn global_minimum_is_always_counted(vals in proptest::collection::vec(0.0f64..1.0, 1..40), cols in 1usize..6) {
            let rows = vals.len().div_ceil(cols);
            let mut v = vals.clone();
            v.resize(rows * cols, 2.0);
            let c = census(&v, &axis(rows), &axis(cols));
            let best = v.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(c.count >= 1);
            prop_assert!(c.minima.iter().any(|m| m.value == best));
            prop_assert!(c.interior_count <= c.count);
        }
    }
}
