use edgetrack::BoundingBox;
use image::{Rgb, RgbImage};

pub const HIGHLIGHT: Rgb<u8> = Rgb([255, 32, 32]);

/// Outlines each box with a 1 px border, clipped to the image. Returns the
/// number of boxes drawn.
pub fn draw_boxes(img: &mut RgbImage, boxes: &[BoundingBox], color: Rgb<u8>) -> usize {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for b in boxes {
        let x0 = b.x.round() as i64;
        let y0 = b.y.round() as i64;
        let x1 = (b.right().round() as i64 - 1).max(x0);
        let y1 = (b.bottom().round() as i64 - 1).max(y0);
        for x in x0..=x1 {
            put(x, y0);
            put(x, y1);
        }
        for y in y0..=y1 {
            put(x0, y);
            put(x1, y);
        }
    }
    boxes.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outlines_only_the_border() {
        let mut img = RgbImage::new(20, 20);
        let n = draw_boxes(&mut img, &[BoundingBox::new(2.0, 3.0, 5.0, 4.0)], HIGHLIGHT);
        assert_eq!(n, 1);
        let lit = img.pixels().filter(|p| **p == HIGHLIGHT).count();
        // perimeter of a 5x4 rectangle
        assert_eq!(lit, 2 * 5 + 2 * 4 - 4);
        assert_eq!(*img.get_pixel(2, 3), HIGHLIGHT);
        assert_eq!(*img.get_pixel(6, 6), HIGHLIGHT);
        assert_eq!(*img.get_pixel(4, 5), Rgb([0, 0, 0]));
    }

    #[test]
    fn clips_boxes_that_leave_the_image() {
        let mut img = RgbImage::new(10, 10);
        assert_eq!(draw_boxes(&mut img, &[BoundingBox::new(-5.0, -5.0, 30.0, 30.0)], HIGHLIGHT), 1);
        assert_eq!(img.pixels().filter(|p| **p == HIGHLIGHT).count(), 0);
    }
}
