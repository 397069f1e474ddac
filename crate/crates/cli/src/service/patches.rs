//! Sample landmark patches served by `GET /patches`, drawn procedurally so the
//! repository carries no binary assets.

use painter_core::canvas::{encode_png, png_data_url};
use painter_core::{Shape, Tensor};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SamplePatch {
    pub name: &'static str,
    pub width: usize,
    pub height: usize,
    /// `data:image/png;base64,…`, ready to drop into a placement.
    pub image: String,
}

const SIZE: usize = 16;

fn draw(rgb: impl Fn(f64, f64) -> [f64; 3]) -> Tensor {
    let mut img = Tensor::zeros(Shape::new(3, SIZE, SIZE));
    for y in 0..SIZE {
        for x in 0..SIZE {
            // pixel centre in [-1, 1]
            let u = (x as f64 + 0.5) / SIZE as f64 * 2.0 - 1.0;
            let v = (y as f64 + 0.5) / SIZE as f64 * 2.0 - 1.0;
            for (c, value) in rgb(u, v).into_iter().enumerate() {
                img.set(c, y, x, value);
            }
        }
    }
    img
}

pub fn sample_patches() -> Vec<SamplePatch> {
    let sky = [-0.2, 0.2, 0.8];
    let shapes: [(&'static str, Tensor); 4] = [
        ("sun", draw(|u, v| if u * u + v * v < 0.5 { [1.0, 0.8, -0.6] } else { sky })),
        (
            "tree",
            draw(|u, v| {
                if v > 0.5 && u.abs() < 0.15 {
                    [-0.2, -0.5, -0.8]
                } else if v <= 0.5 && u.abs() < (v + 1.0) * 0.4 {
                    [-0.8, 0.3, -0.7]
                } else {
                    sky
                }
            }),
        ),
        (
            "house",
            draw(|u, v| {
                if v > -0.1 && u.abs() < 0.7 {
                    if u.abs() < 0.2 && v > 0.4 {
                        [-0.4, -0.7, -0.9]
                    } else {
                        [0.6, 0.5, 0.3]
                    }
                } else if v <= -0.1 && u.abs() < (v + 0.9) {
                    [0.5, -0.6, -0.6]
                } else {
                    sky
                }
            }),
        ),
        ("stripes", draw(|u, _| if ((u + 1.0) * 4.0) as i32 % 2 == 0 { [0.9, 0.9, 0.9] } else { [-0.9, -0.9, -0.9] })),
    ];
    shapes
        .into_iter()
        .map(|(name, img)| SamplePatch {
            name,
            width: SIZE,
            height: SIZE,
            image: png_data_url(&encode_png(&img).expect("3-channel patch encodes")),
        })
        .collect()
}
