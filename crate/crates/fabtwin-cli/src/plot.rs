//! Chart and heatmap rendering. Everything is drawn by hand onto an RGB
//! buffer so identical inputs always produce byte-identical PNGs.

use crate::font::{self, ADVANCE, GLYPH_H, GLYPH_W};
use anyhow::{bail, Context, Result};
use fabtwin::raster::GrayImage;
use fabtwin::train::LossRecord;
use std::path::{Path, PathBuf};

pub const CHART_W: usize = 800;
pub const CHART_H: usize = 480;

const BG: [u8; 3] = [255, 255, 255];
const INK: [u8; 3] = [20, 20, 20];
const GRID: [u8; 3] = [225, 225, 225];
const RED: [u8; 3] = [202, 75, 60];
const BLUE: [u8; 3] = [58, 96, 180];
const GREEN: [u8; 3] = [40, 140, 90];

pub struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    pub fn new(w: usize, h: usize, bg: [u8; 3]) -> Self {
        let mut px = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            px.extend_from_slice(&bg);
        }
        Self { w, h, px }
    }

    pub fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return;
        }
        let i = (y as usize * self.w + x as usize) * 3;
        self.px[i..i + 3].copy_from_slice(&c);
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: usize, h: usize, c: [u8; 3]) {
        for dy in 0..h as i64 {
            for dx in 0..w as i64 {
                self.set(x + dx, y + dy, c);
            }
        }
    }

    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        let (dx, sx) = ((x1 - x0).abs(), if x0 < x1 { 1 } else { -1 });
        let (dy, sy) = (-(y1 - y0).abs(), if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.set(x, y, c);
            if x == x1 && y == y1 {
                return;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn text(&mut self, x: i64, y: i64, s: &str, scale: usize, c: [u8; 3]) {
        let k = scale.max(1) as i64;
        let mut cx = x;
        for ch in s.chars() {
            let rows = font::glyph(ch);
            for (ry, row) in rows.iter().enumerate() {
                for col in 0..GLYPH_W {
                    if row >> (GLYPH_W - 1 - col) & 1 == 1 {
                        for oy in 0..k {
                            for ox in 0..k {
                                self.set(
                                    cx + col as i64 * k + ox,
                                    y + ry as i64 * k + oy,
                                    c,
                                );
                            }
                        }
                    }
                }
            }
            cx += ADVANCE as i64 * k;
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.w as u32, self.h as u32, self.px.clone())
            .context("canvas buffer size mismatch")?;
        img.save_with_format(path, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Compact tick label: plain decimal in a middle range, scientific outside it.
pub fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(0.001..10000.0).contains(&a) {
        return format!("{v:.2e}");
    }
    let mut s = format!("{v:.3}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    s
}

fn padded_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { (hi.abs() * 0.1).max(1e-6) };
    Some((lo - pad, hi + pad))
}

struct Frame {
    x0: i64,
    y0: i64,
    pw: i64,
    ph: i64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> i64 {
        let t = (x - self.xr.0) / (self.xr.1 - self.xr.0);
        self.x0 + (t * (self.pw - 1) as f64).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let t = (y - self.yr.0) / (self.yr.1 - self.yr.0);
        self.y0 + self.ph - 1 - (t * (self.ph - 1) as f64).round() as i64
    }
}

fn draw_chart(
    title: &str,
    xs: &[f64],
    series: &[(&str, [u8; 3], Vec<f64>)],
    path: &Path,
) -> Result<()> {
    let (left, right, top, bottom) = (64i64, 14i64, 30i64, 40i64);
    let mut c = Canvas::new(CHART_W, CHART_H, BG);
    let xr = padded_range(xs.iter().copied()).context("no finite step values")?;
    let yr = padded_range(series.iter().flat_map(|(_, _, ys)| ys.iter().copied()))
        .context("no finite loss values")?;
    let f = Frame {
        x0: left,
        y0: top,
        pw: CHART_W as i64 - left - right,
        ph: CHART_H as i64 - top - bottom,
        xr,
        yr,
    };

    // Gridlines and tick labels, five divisions per axis.
    for i in 0..=4 {
        let tx = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
        let gx = f.px(tx);
        c.line(gx, f.y0, gx, f.y0 + f.ph - 1, GRID);
        let label = fmt_tick(tx);
        let lw = font::text_width(&label) as i64;
        c.text(gx - lw / 2, f.y0 + f.ph + 6, &label, 1, INK);

        let ty = yr.0 + (yr.1 - yr.0) * i as f64 / 4.0;
        let gy = f.py(ty);
        c.line(f.x0, gy, f.x0 + f.pw - 1, gy, GRID);
        let label = fmt_tick(ty);
        let lw = font::text_width(&label) as i64;
        c.text(f.x0 - lw - 6, gy - GLYPH_H as i64 / 2, &label, 1, INK);
    }

    // Axis lines over the grid.
    c.line(f.x0, f.y0, f.x0, f.y0 + f.ph - 1, INK);
    c.line(f.x0, f.y0 + f.ph - 1, f.x0 + f.pw - 1, f.y0 + f.ph - 1, INK);
    c.text(left, 10, title, 1, INK);
    let xl = "step";
    c.text(
        f.x0 + (f.pw - font::text_width(xl) as i64) / 2,
        CHART_H as i64 - GLYPH_H as i64 - 6,
        xl,
        1,
        INK,
    );

    for (si, (label, color, ys)) in series.iter().enumerate() {
        let mut prev: Option<(i64, i64)> = None;
        for (&x, &y) in xs.iter().zip(ys) {
            if !x.is_finite() || !y.is_finite() {
                prev = None;
                continue;
            }
            let p = (f.px(x), f.py(y));
            match prev {
                Some(q) => c.line(q.0, q.1, p.0, p.1, *color),
                None => c.fill_rect(p.0 - 1, p.1 - 1, 3, 3, *color),
            }
            prev = Some(p);
        }
        // Legend entry, stacked top-right inside the frame.
        let ly = f.y0 + 8 + si as i64 * (GLYPH_H as i64 + 5);
        let lw = font::text_width(label) as i64;
        let lx = f.x0 + f.pw - lw - 26;
        c.line(lx, ly + GLYPH_H as i64 / 2, lx + 14, ly + GLYPH_H as i64 / 2, *color);
        c.line(lx, ly + GLYPH_H as i64 / 2 + 1, lx + 14, ly + GLYPH_H as i64 / 2 + 1, *color);
        c.text(lx + 20, ly, label, 1, INK);
    }

    c.save_png(path)
}

/// Sibling path for the second chart: `losses.png` -> `losses.components.png`.
pub fn components_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("chart");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("png");
    out.with_file_name(format!("{stem}.components.{ext}"))
}

/// Two charts from one training log: adversarial balance (`loss_D` against
/// `loss_G_total`) at `out`, generator components (`loss_G_gan` against
/// `loss_G_l1`) at the `.components` sibling. Returns the sibling path.
pub fn plot_loss_curves(records: &[LossRecord], out: &Path) -> Result<PathBuf> {
    if records.is_empty() {
        bail!("loss log has no rows");
    }
    let xs: Vec<f64> = records.iter().map(|r| r.step as f64).collect();
    draw_chart(
        "loss_D vs loss_G_total",
        &xs,
        &[
            ("loss_D", RED, records.iter().map(|r| r.loss_d).collect()),
            ("loss_G_total", BLUE, records.iter().map(|r| r.loss_g_total).collect()),
        ],
        out,
    )?;
    let second = components_path(out);
    draw_chart(
        "loss_G_gan vs loss_G_l1",
        &xs,
        &[
            ("loss_G_gan", BLUE, records.iter().map(|r| r.loss_g_gan).collect()),
            ("loss_G_l1", GREEN, records.iter().map(|r| r.loss_g_l1).collect()),
        ],
        &second,
    )?;
    Ok(second)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatScale {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for HeatScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(HeatScale::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(HeatScale::Fixed(v)),
            _ => Err(format!("scale must be \"auto\" or a positive number, got {s:?}")),
        }
    }
}

/// Black-body style ramp from near-black through violet and orange to pale
/// yellow; `t` is clamped to [0, 1].
pub fn heat_color(t: f64) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 4.0]),
        (0.25, [87.0, 16.0, 110.0]),
        (0.5, [188.0, 55.0, 84.0]),
        (0.75, [249.0, 142.0, 9.0]),
        (1.0, [252.0, 255.0, 164.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let hi = STOPS.iter().position(|(p, _)| t <= *p).unwrap_or(STOPS.len() - 1).max(1);
    let (p0, c0) = STOPS[hi - 1];
    let (p1, c1) = STOPS[hi];
    let u = if p1 > p0 { (t - p0) / (p1 - p0) } else { 0.0 };
    let mix = |a: f64, b: f64| (a + (b - a) * u).round() as u8;
    [mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2])]
}

const LEGEND_H: usize = 22;
const HEAT_MIN_W: usize = 180;

/// Color-ramp rendering of a scalar map with a legend strip underneath.
/// `Auto` pins the ramp top to the map's maximum; an all-zero map renders
/// entirely in the ramp's base color.
pub fn render_heatmap(map: &GrayImage, scale: HeatScale, out: &Path) -> Result<()> {
    let (w, h) = (map.width(), map.height());
    let top = match scale {
        HeatScale::Fixed(v) => v,
        HeatScale::Auto => map.values().iter().cloned().fold(0.0f64, f64::max),
    };
    let cw = w.max(HEAT_MIN_W);
    let mut c = Canvas::new(cw, h + LEGEND_H, BG);
    for y in 0..h {
        for x in 0..w {
            let t = if top > 0.0 { map.get(x, y) / top } else { 0.0 };
            c.set(x as i64, y as i64, heat_color(t));
        }
    }
    // Legend: gradient bar with the ramp-top value spelled out beside it.
    let label = format!("max={}", fmt_tick(top));
    let bar_y = (h + 7) as i64;
    let label_w = font::text_width(&label) as i64;
    let bar_w = (cw as i64 - label_w - 18).max(20);
    for x in 0..bar_w {
        let t = x as f64 / (bar_w - 1).max(1) as f64;
        for y in 0..8 {
            c.set(4 + x, bar_y + y, heat_color(t));
        }
    }
    c.text(4 + bar_w + 8, bar_y, &label, 1, INK);
    c.save_png(out)
}
