//! Box and keypoint primitives in image-pixel coordinates.
//!
//! Boxes follow an inclusive-exclusive convention: a point lies inside
//! `(x1, y1, x2, y2)` when `x1 <= x < x2` and `y1 <= y < y2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of COCO keypoint slots per person.
pub const NUM_KEYPOINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidInput(format!(
                "box coordinates must be finite and non-negative: {coords:?}"
            )));
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::InvalidInput(format!(
                "degenerate box (zero area): {coords:?}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    /// COCO slot, 0..17.
    pub index: usize,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64, index: usize) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "keypoint {index} has non-finite position ({x}, {y})"
            )));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidInput(format!(
                "keypoint {index} confidence {confidence} outside [0, 1]"
            )));
        }
        if index >= NUM_KEYPOINTS {
            return Err(Error::InvalidInput(format!(
                "keypoint index {index} outside 0..{NUM_KEYPOINTS}"
            )));
        }
        Ok(Keypoint {
            x,
            y,
            confidence,
            index,
        })
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Whether a keypoint, grown to a square of half-side `dilation`, overlaps `b`.
///
/// With zero dilation this is the point-in-box test under the
/// inclusive-exclusive convention.
pub fn keypoint_hits_box(k: &Keypoint, b: &BBox, dilation: f64) -> bool {
    let d = dilation.max(0.0);
    k.x + d >= b.x1 && k.x - d < b.x2 && k.y + d >= b.y1 && k.y - d < b.y2
}

/// Euclidean keypoint distance divided by the image diagonal, clamped to `[0, 1]`.
pub fn normalized_distance(a: &Keypoint, b: &Keypoint, image_w: f64, image_h: f64) -> Result<f64> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "image dimensions must be positive, got {image_w}x{image_h}"
        )));
    }
    let diag = image_w.hypot(image_h);
    let d = (a.x - b.x).hypot(a.y - b.y);
    Ok((d / diag).clamp(0.0, 1.0))
}

/// Smallest box containing both inputs.
pub fn union_box(a: &BBox, b: &BBox) -> BBox {
    BBox {
        x1: a.x1.min(b.x1),
        y1: a.y1.min(b.y1),
        x2: a.x2.max(b.x2),
        y2: a.y2.max(b.y2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn kp(x: f64, y: f64) -> Keypoint {
        Keypoint::new(x, y, 1.0, 0).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(
            iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 6.0, 6.0)).unwrap(),
            0.0
        );
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0)).unwrap();
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
        assert!(BBox::new(-1.0, 0.0, 2.0, 5.0).is_err());
        let flat = BBox {
            x1: 0.0,
            y1: 0.0,
            x2: 0.0,
            y2: 1.0,
        };
        assert!(matches!(
            iou(&flat, &bx(0.0, 0.0, 1.0, 1.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn keypoint_hit_examples() {
        let b = bx(0.0, 0.0, 10.0, 10.0);
        assert!(keypoint_hits_box(&kp(5.0, 5.0), &b, 0.0));
        assert!(!keypoint_hits_box(&kp(11.0, 5.0), &b, 0.0));
        assert!(keypoint_hits_box(&kp(11.0, 5.0), &b, 2.0));
        // right edge is exclusive
        assert!(!keypoint_hits_box(&kp(10.0, 5.0), &b, 0.0));
        assert!(keypoint_hits_box(&kp(0.0, 0.0), &b, 0.0));
    }

    #[test]
    fn distance_examples() {
        let a = kp(0.0, 0.0);
        assert_eq!(normalized_distance(&a, &a, 10.0, 10.0).unwrap(), 0.0);
        assert_eq!(
            normalized_distance(&a, &kp(640.0, 480.0), 640.0, 480.0).unwrap(),
            1.0
        );
        let d = normalized_distance(&a, &kp(3.0, 4.0), 10.0, 10.0).unwrap();
        assert!((d - 5.0 / 200f64.sqrt()).abs() < 1e-12);
        assert!(normalized_distance(&a, &a, 0.0, 10.0).is_err());
    }

    #[test]
    fn union_examples() {
        let a = bx(0.0, 0.0, 1.0, 1.0);
        assert_eq!(union_box(&a, &a), a);
        assert_eq!(
            union_box(&a, &bx(2.0, 2.0, 3.0, 3.0)),
            bx(0.0, 0.0, 3.0, 3.0)
        );
        let big = bx(0.0, 0.0, 5.0, 5.0);
        assert_eq!(union_box(&big, &bx(1.0, 1.0, 2.0, 2.0)), big);
    }

    #[test]
    fn bbox_json_is_four_numbers() {
        let b: BBox = serde_json::from_str("[1, 2, 3, 4]").unwrap();
        assert_eq!(b, bx(1.0, 2.0, 3.0, 4.0));
        assert!(serde_json::from_str::<BBox>("[3, 2, 1, 4]").is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..500.0f64, 0.0..500.0f64, 0.5..200.0f64, 0.5..200.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn union_contains_both(a in arb_box(), b in arb_box()) {
            let u = union_box(&a, &b);
            prop_assert!(u.contains_box(&a) && u.contains_box(&b));
            prop_assert_eq!(u, union_box(&b, &a));
            prop_assert_eq!(union_box(&u, &u), u);
        }

        #[test]
        fn distance_symmetric(x1 in 0.0..100.0f64, y1 in 0.0..80.0f64, x2 in 0.0..100.0f64, y2 in 0.0..80.0f64) {
            let (a, b) = (kp(x1, y1), kp(x2, y2));
            prop_assert_eq!(normalized_distance(&a, &b, 100.0, 80.0).unwrap(),
                            normalized_distance(&b, &a, 100.0, 80.0).unwrap());
            prop_assert_eq!(normalized_distance(&a, &a, 100.0, 80.0).unwrap(), 0.0);
        }

        #[test]
        fn undilated_hit_is_half_open_containment(b in arb_box(), x in 0.0..800.0f64, y in 0.0..800.0f64) {
            let inside = b.x1 <= x && x < b.x2 && b.y1 <= y && y < b.y2;
            prop_assert_eq!(keypoint_hits_box(&kp(x, y), &b, 0.0), inside);
        }
    }
}
