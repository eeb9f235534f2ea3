//! Resizing for the 192x640 pre-processing: bilinear for images, nearest
//! for masks and instance ids, bilinear with validity propagation for
//! depth (interpolating across a valid/invalid boundary would fabricate
//! depths, so any invalid corner invalidates the output pixel).

use crate::imagery::{Image, ScalarMap};

fn src_coord(dst: usize, dst_size: usize, src_size: usize) -> f64 {
    // Center-aligned mapping.
    let scale = src_size as f64 / dst_size as f64;
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_size - 1) as f64)
}

/// Bilinear image resize with border clamping.
pub fn resize_image_bilinear(img: &Image, new_width: usize, new_height: usize) -> Image {
    let c = img.channels();
    let mut data = Vec::with_capacity(new_width * new_height * c);
    for v in 0..new_height {
        let sv = src_coord(v, new_height, img.height());
        for u in 0..new_width {
            let su = src_coord(u, new_width, img.width());
            for ch in 0..c {
                data.push(
                    img.sample_bilinear(su, sv, ch)
                        .expect("clamped coordinate is in bounds"),
                );
            }
        }
    }
    Image::new(new_width, new_height, c, data).expect("resampled values stay in range")
}

/// Nearest-neighbor resize preserving exact label values and validity.
pub fn resize_map_nearest(map: &ScalarMap, new_width: usize, new_height: usize) -> ScalarMap {
    ScalarMap::from_fn(new_width, new_height, map.units(), |u, v| {
        let su = src_coord(u, new_width, map.width()).round() as usize;
        let sv = src_coord(v, new_height, map.height()).round() as usize;
        map.get(su.min(map.width() - 1), sv.min(map.height() - 1))
    })
}

/// Bilinear resize for depth-like maps: a destination pixel is valid only
/// if all four source corners are, preventing interpolation across
/// validity boundaries.
pub fn resize_depth_bilinear(map: &ScalarMap, new_width: usize, new_height: usize) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    ScalarMap::from_fn(new_width, new_height, map.units(), |u, v| {
        let su = src_coord(u, new_width, w);
        let sv = src_coord(v, new_height, h);
        let u0 = (su.floor() as usize).min(w.saturating_sub(2));
        let v0 = (sv.floor() as usize).min(h.saturating_sub(2));
        let u1 = (u0 + 1).min(w - 1);
        let v1 = (v0 + 1).min(h - 1);
        let corners = [(u0, v0), (u1, v0), (u0, v1), (u1, v1)];
        if corners.iter().any(|&(cu, cv)| !map.is_valid(cu, cv)) {
            return None;
        }
        let fu = su - u0 as f64;
        let fv = sv - v0 as f64;
        Some(
            (1.0 - fu) * (1.0 - fv) * map.value_at(u0, v0)
                + fu * (1.0 - fv) * map.value_at(u1, v0)
                + (1.0 - fu) * fv * map.value_at(u0, v1)
                + fu * fv * map.value_at(u1, v1),
        )
    })
}
