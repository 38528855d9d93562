//! Rectangular pixel regions.

use serde::{Deserialize, Serialize};

/// Pixels `x0 .. x0 + w` by `y0 .. y0 + h`. A sub-pixel position belongs to
/// the box when it falls inside the area of one of those pixels, i.e. within
/// `[x0 - 0.5, x0 + w - 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: u16,
    pub y0: u16,
    pub w: u16,
    pub h: u16,
}

impl PixelBox {
    pub fn new(x0: u16, y0: u16, w: u16, h: u16) -> Self {
        Self { x0, y0, w, h }
    }

    /// Box of `size x size` pixels whose centre is nearest `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, size: u16) -> Self {
        let half = (size as f64 - 1.0) / 2.0;
        let x0 = (cx - half).round().max(0.0) as u16;
        let y0 = (cy - half).round().max(0.0) as u16;
        Self::new(x0, y0, size, size)
    }

    pub fn contains_pixel(&self, x: u16, y: u16) -> bool {
        x >= self.x0 && x - self.x0 < self.w && y >= self.y0 && y - self.y0 < self.h
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let fx = x - self.x0 as f64 + 0.5;
        let fy = y - self.y0 as f64 + 0.5;
        fx >= 0.0 && fx < self.w as f64 && fy >= 0.0 && fy < self.h as f64
    }

    pub fn intersects(&self, other: &PixelBox) -> bool {
        let (ax1, ay1) = (self.x0 as u32 + self.w as u32, self.y0 as u32 + self.h as u32);
        let (bx1, by1) = (other.x0 as u32 + other.w as u32, other.y0 as u32 + other.h as u32);
        (self.x0 as u32) < bx1 && (other.x0 as u32) < ax1 && (self.y0 as u32) < by1 && (other.y0 as u32) < ay1
    }

    pub fn area(&self) -> u32 {
        self.w as u32 * self.h as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment_edges() {
        let b = PixelBox::new(10, 20, 3, 2);
        assert!(b.contains_pixel(10, 20) && b.contains_pixel(12, 21));
        assert!(!b.contains_pixel(13, 20) && !b.contains_pixel(9, 20));
        assert!(b.contains(9.5, 19.5));
        assert!(!b.contains(9.49, 20.0));
        assert!(b.contains(12.49, 21.49));
        assert!(!b.contains(12.5, 21.0));
    }

    #[test]
    fn centred_box() {
        let b = PixelBox::centered(70.0, 128.0, 30);
        assert!(b.contains(70.0, 128.0));
        assert_eq!(b.w, 30);
        assert!((b.x0 as f64 + 14.5 - 70.0).abs() <= 0.5);
        assert!(!b.intersects(&PixelBox::centered(186.0, 128.0, 42)));
        assert!(b.intersects(&PixelBox::new(80, 120, 10, 10)));
    }
}
