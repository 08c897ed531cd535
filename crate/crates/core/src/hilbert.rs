//! Order-k Hilbert curve over a 2^k × 2^k grid.
//!
//! Orientation: index 0 sits at cell (0, 0) and the order-1 curve visits
//! (0,0) → (0,1) → (1,1) → (1,0). With y counted downwards (row index) that is
//! a "U" opening upwards. Every higher order refines this base shape.

use crate::error::{Error, Result};

pub const MAX_ORDER: u32 = 31;
pub const DEFAULT_ORDER: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HilbertIndex {
    order: u32,
    d: u64,
}

impl GridCell {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl HilbertIndex {
    pub fn new(order: u32, d: u64) -> Result<Self> {
        check_order(order)?;
        if d >= cell_count(order) {
            return Err(Error::Domain(format!("index {d} outside order-{order} curve")));
        }
        Ok(Self { order, d })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn d(&self) -> u64 {
        self.d
    }
}

fn check_order(order: u32) -> Result<()> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Domain(format!("curve order must lie in [1, {MAX_ORDER}], got {order}")));
    }
    Ok(())
}

/// Cells per side, 2^k.
pub fn side(order: u32) -> u64 {
    1u64 << order
}

/// Cells on the curve, 4^k.
pub fn cell_count(order: u32) -> u64 {
    1u64 << (2 * order)
}

/// Smallest order whose curve has at least `cells` cells.
pub fn order_for(cells: u64) -> u32 {
    let mut k = 1;
    while k < MAX_ORDER && cell_count(k) < cells {
        k += 1;
    }
    k
}

fn rotate(n: u64, x: &mut u64, y: &mut u64, rx: u64, ry: u64) {
    if ry == 0 {
        if rx == 1 {
            *x = n - 1 - *x;
            *y = n - 1 - *y;
        }
        std::mem::swap(x, y);
    }
}

pub fn xy_to_index(cell: GridCell, order: u32) -> Result<HilbertIndex> {
    check_order(order)?;
    let n = side(order);
    let (mut x, mut y) = (u64::from(cell.x), u64::from(cell.y));
    if x >= n || y >= n {
        return Err(Error::Domain(format!("cell ({}, {}) outside {n}x{n} grid", cell.x, cell.y)));
    }
    let mut d = 0;
    let mut s = n / 2;
    while s > 0 {
        let rx = u64::from(x & s > 0);
        let ry = u64::from(y & s > 0);
        d += s * s * ((3 * rx) ^ ry);
        rotate(n, &mut x, &mut y, rx, ry);
        s /= 2;
    }
    Ok(HilbertIndex { order, d })
}

pub fn index_to_xy(idx: HilbertIndex) -> GridCell {
    let n = side(idx.order);
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = idx.d;
    let mut s = 1;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        rotate(s, &mut x, &mut y, rx, ry);
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    GridCell { x: x as u32, y: y as u32 }
}

/// Geographic bounding box in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

/// Uniform quantization of a coordinate into the grid: longitude → x,
/// latitude → y. The upper boundary maps to the last cell.
pub fn latlon_to_cell(lat: f64, lon: f64, bbox: &BoundingBox, order: u32) -> Result<GridCell> {
    check_order(order)?;
    let lat_span = bbox.max_lat - bbox.min_lat;
    let lon_span = bbox.max_lon - bbox.min_lon;
    if !(lat_span > 0.0 && lon_span > 0.0) {
        return Err(Error::Domain("degenerate bounding box".into()));
    }
    if !(bbox.min_lat..=bbox.max_lat).contains(&lat) || !(bbox.min_lon..=bbox.max_lon).contains(&lon) {
        return Err(Error::Domain(format!("({lat}, {lon}) outside bounding box")));
    }
    let n = side(order);
    let quantize = |v: f64, lo: f64, span: f64| -> u32 {
        let cell = ((v - lo) / span * n as f64).floor() as u64;
        cell.min(n - 1) as u32
    };
    Ok(GridCell {
        x: quantize(lon, bbox.min_lon, lon_span),
        y: quantize(lat, bbox.min_lat, lat_span),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_shape() {
        let cells: Vec<_> = (0..4)
            .map(|d| index_to_xy(HilbertIndex::new(1, d).unwrap()))
            .map(|c| (c.x, c.y))
            .collect();
        assert_eq!(cells, vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
        assert_eq!(xy_to_index(GridCell::new(0, 0), 1).unwrap().d(), 0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(xy_to_index(GridCell::new(4, 0), 2).is_err());
        assert!(xy_to_index(GridCell::new(0, 0), 0).is_err());
        assert!(HilbertIndex::new(2, 16).is_err());
    }

    #[test]
    fn order_for_counts() {
        assert_eq!(order_for(1), 1);
        assert_eq!(order_for(4), 1);
        assert_eq!(order_for(5), 2);
        assert_eq!(order_for(100), 4);
        assert_eq!(order_for(4096), 6);
    }

    #[test]
    fn quantization() {
        let bbox = BoundingBox { min_lat: 10.0, min_lon: 20.0, max_lat: 11.0, max_lon: 22.0 };
        assert_eq!(latlon_to_cell(10.0, 20.0, &bbox, 3).unwrap(), GridCell::new(0, 0));
        assert_eq!(latlon_to_cell(11.0, 22.0, &bbox, 3).unwrap(), GridCell::new(7, 7));
        assert_eq!(latlon_to_cell(10.5, 21.0, &bbox, 3).unwrap(), GridCell::new(4, 4));
        assert!(latlon_to_cell(12.0, 21.0, &bbox, 3).is_err());
        let flat = BoundingBox { min_lat: 1.0, min_lon: 1.0, max_lat: 1.0, max_lon: 2.0 };
        assert!(latlon_to_cell(1.0, 1.5, &flat, 3).is_err());
    }
}
