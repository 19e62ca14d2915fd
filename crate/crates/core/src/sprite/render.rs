use super::{DataError, Image, ShapeKind, SpriteSpec};

/// Uniform mid-grey background.
pub const BACKGROUND: [f64; 3] = [0.5, 0.5, 0.5];

/// Fraction of the image height kept free above and below the band in which
/// sprite centres move.
pub const POSITION_MARGIN: f64 = 0.25;

const SUPERSAMPLE: usize = 4;

/// Recorded when a sprite would have crossed the canvas edge and its centre
/// was moved to keep it inside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampWarning {
    pub requested_cy: f64,
    pub clamped_cy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub image: Image,
    pub warning: Option<ClampWarning>,
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Draws one filled, anti-aliased sprite on the grey background.
pub fn render_sprite(spec: &SpriteSpec, size: usize) -> Result<Rendered, DataError> {
    spec.validate()?;
    if size == 0 {
        return Err(DataError::Config("image size must be positive".into()));
    }
    let side = size as f64;
    let extent = spec.scale * side;
    let half = 0.5 * extent;
    let cx = SpriteSpec::HPOS * side;
    let requested_cy = side * (POSITION_MARGIN + (1.0 - spec.vpos) * (1.0 - 2.0 * POSITION_MARGIN));
    let cy = requested_cy.clamp(half, side - half);
    let warning = (cy != requested_cy).then_some(ClampWarning {
        requested_cy,
        clamped_cy: cy,
    });

    let inside = |x: f64, y: f64| -> bool {
        let (dx, dy) = (x - cx, y - cy);
        match spec.shape {
            ShapeKind::Square => dx.abs() <= half && dy.abs() <= half,
            ShapeKind::Circle => dx * dx + dy * dy <= half * half,
            ShapeKind::Triangle => {
                // Apex up; base and height both equal `extent`.
                let from_top = dy + half;
                (0.0..=extent).contains(&from_top) && dx.abs() <= 0.5 * from_top
            }
        }
    };

    let colour = hsv_to_rgb(spec.hue, spec.saturation, spec.brightness);
    let (x0, x1) = pixel_span(cx - half, cx + half, size);
    let (y0, y1) = pixel_span(cy - half, cy + half, size);
    let samples = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut values = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let mut hits = 0usize;
            if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                        let py = y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                        hits += inside(px, py) as usize;
                    }
                }
            }
            let a = hits as f64 / samples;
            for c in 0..3 {
                values.push(a * colour[c] + (1.0 - a) * BACKGROUND[c]);
            }
        }
    }
    let image = Image::from_unit(size, &values).expect("buffer sized to image");
    Ok(Rendered { image, warning })
}

fn pixel_span(lo: f64, hi: f64, size: usize) -> (usize, usize) {
    let a = lo.floor().max(0.0) as usize;
    let b = (hi.ceil().max(0.0) as usize + 1).min(size);
    (a.min(size), b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(shape: ShapeKind, scale: f64, vpos: f64) -> SpriteSpec {
        SpriteSpec {
            hue: 0.0,
            saturation: 1.0,
            brightness: 1.0,
            scale,
            shape,
            vpos,
        }
    }

    fn background(size: usize) -> Image {
        Image::from_unit(size, &vec![0.5; size * size * 3]).unwrap()
    }

    #[test]
    fn vanishing_sprite_is_background() {
        for shape in [ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Circle] {
            let r = render_sprite(&spec(shape, 1e-6, 0.5), 64).unwrap();
            assert_eq!(r.image, background(64));
        }
    }

    #[test]
    fn red_square_interior() {
        let r = render_sprite(&spec(ShapeKind::Square, 0.4, 0.5), 64).unwrap();
        assert_eq!(r.image.rgb(32, 32), [255, 0, 0]);
        assert_eq!(r.image.rgb(32 + 11, 32 - 11), [255, 0, 0]);
        assert_eq!(r.image.rgb(2, 2), [128, 128, 128]);
        assert!(r.warning.is_none());
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = SpriteSpec {
            hue: 0.31,
            saturation: 0.7,
            brightness: 0.8,
            scale: 0.27,
            shape: ShapeKind::Triangle,
            vpos: 0.9,
        };
        assert_eq!(render_sprite(&s, 64).unwrap(), render_sprite(&s, 64).unwrap());
    }

    #[test]
    fn vertical_position_moves_sprite_up() {
        let row_of_max = |vpos| {
            let img = render_sprite(&spec(ShapeKind::Circle, 0.2, vpos), 64).unwrap().image;
            (0..64).find(|&y| img.rgb(32, y)[1] == 0).unwrap()
        };
        assert!(row_of_max(0.9) < row_of_max(0.5));
        assert!(row_of_max(0.5) < row_of_max(0.1));
    }

    #[test]
    fn oversized_sprite_is_clamped_with_warning() {
        let r = render_sprite(&spec(ShapeKind::Square, 0.9, 1.0), 64).unwrap();
        let w = r.warning.expect("clamp warning");
        assert!(w.clamped_cy > w.requested_cy);
        assert!((w.clamped_cy - 0.45 * 64.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_is_narrower_at_top() {
        let img = render_sprite(&spec(ShapeKind::Triangle, 0.4, 0.5), 64).unwrap().image;
        let width = |y| (0..64).filter(|&x| img.rgb(x, y) == [255, 0, 0]).count();
        assert!(width(22) < width(40));
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb(1.0 / 3.0, 1.0, 1.0);
        assert!((g[1] - 1.0).abs() < 1e-12 && g[0].abs() < 1e-12);
        assert_eq!(hsv_to_rgb(0.3, 0.0, 0.6), [0.6, 0.6, 0.6]);
    }
}
