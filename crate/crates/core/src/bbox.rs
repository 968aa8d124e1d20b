//! Axis-aligned boxes, IoU and GIoU.

/// `(x, y)` is the top-left corner; all values in pixels of whatever frame
/// the caller is working in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Positive finite extents.
    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Euclidean distance between centers.
    pub fn center_error(&self, other: &BBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        libm::hypot(ax - bx, ay - by)
    }

    fn intersection(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        iw.max(0.0) * ih.max(0.0)
    }

    /// Area from the edges, the same differences the intersection uses, so
    /// identical boxes overlap with IoU exactly 1.
    fn edge_area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.edge_area() + other.edge_area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    /// `IoU − |hull \ union| / |hull|`.
    pub fn giou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        let union = self.edge_area() + other.edge_area() - inter;
        let hull = (self.right().max(other.right()) - self.x.min(other.x))
            * (self.bottom().max(other.bottom()) - self.y.min(other.y));
        if union <= 0.0 || hull <= 0.0 {
            return 0.0;
        }
        inter / union - (hull - union) / hull
    }

    /// Clips to `[0, width] × [0, height]`, keeping at least `min_side` on each
    /// axis. Returns the clipped box and whether the minimum side had to be
    /// enforced.
    pub fn clamp_to(&self, width: f64, height: f64, min_side: f64) -> (BBox, bool) {
        let axis = |lo: f64, len: f64, limit: f64| {
            let a = lo.clamp(0.0, limit);
            let b = (lo + len).clamp(0.0, limit);
            if b - a >= min_side {
                (a, b - a, false)
            } else {
                let side = min_side.min(limit);
                let c = ((a + b) / 2.0).clamp(side / 2.0, limit - side / 2.0);
                (c - side / 2.0, side, true)
            }
        };
        let (x, w, fx) = axis(self.x, self.w, width);
        let (y, h, fy) = axis(self.y, self.h, height);
        (BBox::new(x, y, w, h), fx || fy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn giou_hand_cases() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(a.giou(&a), 1.0);
        let b = BBox::new(2.0, 2.0, 1.0, 1.0);
        assert!((a.giou(&b) + 7.0 / 9.0).abs() < 1e-12);
        let outer = BBox::new(0.0, 0.0, 4.0, 4.0);
        let inner = BBox::new(1.0, 1.0, 2.0, 2.0);
        assert_eq!(outer.giou(&inner), outer.iou(&inner));
        assert_eq!(outer.iou(&inner), 0.25);
    }

    #[test]
    fn clamp_enforces_minimum() {
        let (b, flagged) = BBox::new(-10.0, 5.0, 4.0, 0.5).clamp_to(100.0, 100.0, 2.0);
        assert!(flagged);
        assert_eq!(b.w, 2.0);
        assert_eq!(b.h, 2.0);
        assert!(b.x >= 0.0);
        let (same, flagged) = BBox::new(10.0, 10.0, 20.0, 20.0).clamp_to(100.0, 100.0, 2.0);
        assert!(!flagged);
        assert_eq!(same, BBox::new(10.0, 10.0, 20.0, 20.0));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50.0..50.0f64, -50.0..50.0f64, 0.1..40.0f64, 0.1..40.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn giou_properties(a in arb_box(), b in arb_box()) {
            let g = a.giou(&b);
            prop_assert!((g - b.giou(&a)).abs() < 1e-12);
            prop_assert!(g <= a.iou(&b) + 1e-12);
            prop_assert!(g > -1.0 && g <= 1.0);
        }

        #[test]
        fn identical_boxes_overlap_exactly(a in arb_box()) {
            prop_assert_eq!(a.iou(&a), 1.0);
            prop_assert_eq!(a.giou(&a), 1.0);
        }
    }
}
