//! The eight symmetries of the square, used for test-time augmentation.

use crate::grid::{Map, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// The subgroup that preserves non-square shapes.
    pub const RECT: [Dihedral; 4] = [
        Dihedral::Identity,
        Dihedral::Rot180,
        Dihedral::FlipH,
        Dihedral::FlipV,
    ];

    pub fn inverse(self) -> Self {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    pub fn preserves_shape(self) -> bool {
        Dihedral::RECT.contains(&self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dihedral::Identity => "identity",
            Dihedral::Rot90 => "rot90",
            Dihedral::Rot180 => "rot180",
            Dihedral::Rot270 => "rot270",
            Dihedral::FlipH => "flip_h",
            Dihedral::FlipV => "flip_v",
            Dihedral::Transpose => "transpose",
            Dihedral::AntiTranspose => "anti_transpose",
        }
    }

    /// Source pixel for output `(y, x)` given input dims `(h, w)`.
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Dihedral::Identity => (y, x),
            Dihedral::Rot90 => (x, w - 1 - y),
            Dihedral::Rot180 => (h - 1 - y, w - 1 - x),
            Dihedral::Rot270 => (h - 1 - x, y),
            Dihedral::FlipH => (y, w - 1 - x),
            Dihedral::FlipV => (h - 1 - y, x),
            Dihedral::Transpose => (x, y),
            Dihedral::AntiTranspose => (h - 1 - x, w - 1 - y),
        }
    }

    fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.preserves_shape() {
            (h, w)
        } else {
            (w, h)
        }
    }

    pub fn apply_map<T: Clone>(self, map: &Map<T>) -> Map<T> {
        let (h, w) = map.dims();
        let (oh, ow) = self.output_dims(h, w);
        Map::from_fn(oh, ow, |y, x| {
            let (sy, sx) = self.source(y, x, h, w);
            map.get(sy, sx).clone()
        })
    }

    pub fn apply_image(self, image: &RgbImage) -> RgbImage {
        let (h, w) = image.dims();
        let (oh, ow) = self.output_dims(h, w);
        RgbImage::from_fn(oh, ow, |y, x| {
            let (sy, sx) = self.source(y, x, h, w);
            image.pixel(sy, sx)
        })
    }
}
