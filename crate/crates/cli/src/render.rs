//! SVG output. One SVG unit is one pixel, y pointing down.

use std::fmt::Write as _;
use std::io::Cursor;

use anyhow::Result;
use base64::Engine;
use roomtree::{GridDims, Polygon, RasterGrid};

const PALETTE: [&str; 10] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45", "#469990", "#9a6324",
];

/// Distinct fill for room `i`; cycles through a fixed palette, then hues.
pub fn room_color(i: usize) -> String {
    if i < PALETTE.len() {
        PALETTE[i].to_string()
    } else {
        format!("hsl({}, 70%, 50%)", (i * 137) % 360)
    }
}

/// Grayscale PNG of the grid, max-normalized.
pub fn grid_png(grid: &RasterGrid) -> Result<Vec<u8>> {
    let max = grid.max();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let px: Vec<u8> = grid.values().iter().map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8).collect();
    let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, px).expect("buffer matches dims");
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn svg(dims: GridDims, underlay: Option<&RasterGrid>, rooms: &[Polygon]) -> Result<String> {
    let (w, h) = (dims.width, dims.height);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )?;
    match underlay {
        Some(g) => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(grid_png(g)?);
            writeln!(
                s,
                r#"<image x="0" y="0" width="{w}" height="{h}" style="image-rendering:pixelated" href="data:image/png;base64,{b64}"/>"#
            )?;
        }
        None => writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#)?,
    }
    for (i, r) in rooms.iter().enumerate() {
        let mut d = String::new();
        for (k, v) in r.vertices().iter().enumerate() {
            write!(d, "{}{:.3},{:.3} ", if k == 0 { "M" } else { "L" }, v.x, v.y)?;
        }
        d.push('Z');
        let c = room_color(i);
        writeln!(
            s,
            r#"<path id="room-{i}" d="{d}" fill="{c}" fill-opacity="0.45" stroke="{c}" stroke-width="1"/>"#
        )?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_paths_distinct_fills() {
        let rooms: Vec<Polygon> = (0..3)
            .map(|i| Polygon::rect(10.0 + 30.0 * i as f64, 10.0, 30.0 + 30.0 * i as f64, 40.0).unwrap())
            .collect();
        let s = svg(GridDims::new(128, 64), None, &rooms).unwrap();
        assert_eq!(s.matches("<path").count(), 3);
        assert_eq!(s.matches("Z\"").count(), 3);
        let fills: std::collections::HashSet<_> = (0..3).map(room_color).collect();
        assert_eq!(fills.len(), 3);
        assert!(s.contains(r#"viewBox="0 0 128 64""#));
    }

    #[test]
    fn png_underlay_decodes() {
        let mut g = RasterGrid::zeros(GridDims::new(4, 3));
        g.set(1, 2, 0.5);
        let png = grid_png(&g).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_luma8();
        assert_eq!(img.dimensions(), (4, 3));
        assert_eq!(img.get_pixel(1, 2).0[0], 255);
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
    }
}
