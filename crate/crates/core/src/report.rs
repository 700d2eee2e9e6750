//! Radar charts, stacked bar charts, comparison tables and level distributions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::profile::SystemProfile;
use crate::taxonomy::{AspectId, Viewpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Autonomy,
    Alignment,
}

impl Dimension {
    fn level(self, p: &SystemProfile, a: AspectId) -> u8 {
        match self {
            Dimension::Autonomy => p.autonomy(a).ordinal(),
            Dimension::Alignment => p.alignment(a).ordinal(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Autonomy => "autonomy",
            Dimension::Alignment => "alignment",
        }
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "autonomy" | "au" => Ok(Dimension::Autonomy),
            "alignment" | "al" => Ok(Dimension::Alignment),
            other => Err(format!("unknown dimension `{other}`; expected autonomy or alignment")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    #[serde(rename = "L0")]
    pub l0: u32,
    #[serde(rename = "L1")]
    pub l1: u32,
    #[serde(rename = "L2")]
    pub l2: u32,
}

impl LevelCounts {
    pub fn get(&self, level: u8) -> u32 {
        match level {
            0 => self.l0,
            1 => self.l1,
            _ => self.l2,
        }
    }

    fn bump(&mut self, level: u8) {
        match level {
            0 => self.l0 += 1,
            1 => self.l1 += 1,
            _ => self.l2 += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.l0 + self.l1 + self.l2
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelDistribution {
    pub dimension: Dimension,
    pub per_aspect: BTreeMap<AspectId, LevelCounts>,
    pub population: u32,
}

pub fn level_distribution(profiles: &[SystemProfile], dimension: Dimension) -> LevelDistribution {
    let mut per_aspect: BTreeMap<AspectId, LevelCounts> =
        AspectId::ALL.iter().map(|&a| (a, LevelCounts::default())).collect();
    for p in profiles {
        for a in AspectId::ALL {
            per_aspect.get_mut(&a).expect("all aspects").bump(dimension.level(p, a));
        }
    }
    let population = profiles.len() as u32;
    assert!(per_aspect.values().all(|c| c.total() == population));
    LevelDistribution { dimension, per_aspect, population }
}

// Style constants shared by both chart kinds.
const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";
const AUTONOMY_COLOR: &str = "#1f5fbf";
const ALIGNMENT_COLOR: &str = "#2e9e44";
const GRID_COLOR: &str = "#b0b0b0";
const TEXT_COLOR: &str = "#333333";
const LEVEL_COLORS: [&str; 3] = ["#d9d9d9", "#8fb8de", "#1f5fbf"];

const RADAR_SIZE: f64 = 520.0;
const RADAR_RADIUS: f64 = 190.0;

/// Fixed-precision number without a negative zero.
fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".to_string() } else { s }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Vertex of axis `i` at ring `level`.
pub fn radar_point(i: usize, level: u8) -> (f64, f64) {
    let c = RADAR_SIZE / 2.0;
    let angle = (-90.0 + 30.0 * i as f64).to_radians();
    let r = RADAR_RADIUS * f64::from(level) / 2.0;
    (c + r * angle.cos(), c + 20.0 + r * angle.sin())
}

fn polygon_points(levels: &[u8]) -> String {
    levels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (x, y) = radar_point(i, l);
            format!("{},{}", num(x), num(y))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Radar chart: one axis per aspect, rings for levels 0 to 2, a solid autonomy
/// polygon and a dashed alignment polygon.
pub fn render_radar(profile: &SystemProfile) -> String {
    let c = RADAR_SIZE / 2.0;
    let cy = c + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = RADAR_SIZE,
        h = RADAR_SIZE + 40.0
    );
    let _ = writeln!(s, r#"  <title>{}</title>"#, escape(&profile.name));
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="24" text-anchor="middle" font-size="16" {FONT}>{}</text>"#,
        num(c),
        escape(&profile.name)
    );
    let _ = writeln!(s, r#"  <g class="rings" fill="none" stroke="{GRID_COLOR}">"#);
    for level in 0..3u8 {
        let r = RADAR_RADIUS * f64::from(level) / 2.0;
        if level == 0 {
            let _ = writeln!(
                s,
                r#"    <circle class="ring" data-level="0" cx="{}" cy="{}" r="2.00" fill="{GRID_COLOR}"/>"#,
                num(c),
                num(cy)
            );
        } else {
            let _ = writeln!(
                s,
                r#"    <circle class="ring" data-level="{level}" cx="{}" cy="{}" r="{}"/>"#,
                num(c),
                num(cy),
                num(r)
            );
        }
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, r#"  <g class="axes" stroke="{GRID_COLOR}" font-size="12" {FONT}>"#);
    for (i, a) in AspectId::ALL.iter().enumerate() {
        let (x, y) = radar_point(i, 2);
        let angle = (-90.0 + 30.0 * i as f64).to_radians();
        let (lx, ly) = (c + (RADAR_RADIUS + 22.0) * angle.cos(), cy + (RADAR_RADIUS + 22.0) * angle.sin() + 4.0);
        let _ = writeln!(
            s,
            r#"    <line class="axis" data-aspect="{}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
            a.key(),
            num(c),
            num(cy),
            num(x),
            num(y)
        );
        let _ = writeln!(
            s,
            r#"    <text x="{}" y="{}" text-anchor="middle" stroke="none" fill="{TEXT_COLOR}">{}</text>"#,
            num(lx),
            num(ly),
            a.code()
        );
    }
    let _ = writeln!(s, "  </g>");
    let au: Vec<u8> = AspectId::ALL.iter().map(|&a| profile.autonomy(a).ordinal()).collect();
    let al: Vec<u8> = AspectId::ALL.iter().map(|&a| profile.alignment(a).ordinal()).collect();
    let levels = |v: &[u8]| v.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
    let _ = writeln!(
        s,
        r#"  <polygon class="autonomy" data-levels="{}" points="{}" fill="{AUTONOMY_COLOR}" fill-opacity="0.15" stroke="{AUTONOMY_COLOR}" stroke-width="2"/>"#,
        levels(&au),
        polygon_points(&au)
    );
    let _ = writeln!(
        s,
        r#"  <polygon class="alignment" data-levels="{}" points="{}" fill="none" stroke="{ALIGNMENT_COLOR}" stroke-width="2" stroke-dasharray="6 4"/>"#,
        levels(&al),
        polygon_points(&al)
    );
    let ly = RADAR_SIZE + 24.0;
    let _ = writeln!(s, r#"  <g class="legend" font-size="12" {FONT}>"#);
    let _ = writeln!(s, r#"    <line x1="20" y1="{}" x2="50" y2="{}" stroke="{AUTONOMY_COLOR}" stroke-width="2"/>"#, num(ly), num(ly));
    let _ = writeln!(s, r#"    <text x="56" y="{}">Autonomy</text>"#, num(ly + 4.0));
    let _ = writeln!(
        s,
        r#"    <line x1="140" y1="{}" x2="170" y2="{}" stroke="{ALIGNMENT_COLOR}" stroke-width="2" stroke-dasharray="6 4"/>"#,
        num(ly),
        num(ly)
    );
    let _ = writeln!(s, r#"    <text x="176" y="{}">Alignment</text>"#, num(ly + 4.0));
    let _ = writeln!(s, "  </g>");
    s.push_str("</svg>\n");
    s
}

const BAR_WIDTH: f64 = 36.0;
const BAR_GAP: f64 = 14.0;
const BAR_HEIGHT: f64 = 240.0;
const BAR_LEFT: f64 = 70.0;
const BAR_TOP: f64 = 50.0;

/// Stacked bars of level counts per aspect with the data table below.
pub fn render_bars(dist: &LevelDistribution) -> String {
    let width = BAR_LEFT + 12.0 * (BAR_WIDTH + BAR_GAP) + 20.0;
    let table_top = BAR_TOP + BAR_HEIGHT + 40.0;
    let height = table_top + 4.0 * 20.0 + 20.0;
    let base = BAR_TOP + BAR_HEIGHT;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = num(width),
        h = num(height)
    );
    let title = format!("Distribution of {} levels (n = {})", dist.dimension.name(), dist.population);
    let _ = writeln!(s, r#"  <title>{title}</title>"#);
    let _ = writeln!(s, r#"  <text x="{}" y="28" text-anchor="middle" font-size="16" {FONT}>{title}</text>"#, num(width / 2.0));
    let _ = writeln!(
        s,
        r#"  <line class="baseline" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{GRID_COLOR}"/>"#,
        num(BAR_LEFT - 6.0),
        num(base),
        num(width - 14.0),
        num(base)
    );
    let _ = writeln!(s, r#"  <g class="bars">"#);
    for (i, a) in AspectId::ALL.iter().enumerate() {
        let counts = dist.per_aspect.get(a).copied().unwrap_or_default();
        let x = BAR_LEFT + i as f64 * (BAR_WIDTH + BAR_GAP);
        let mut y = base;
        for level in 0..3u8 {
            let n = counts.get(level);
            if n == 0 || dist.population == 0 {
                continue;
            }
            let h = BAR_HEIGHT * f64::from(n) / f64::from(dist.population);
            y -= h;
            let _ = writeln!(
                s,
                r#"    <rect class="segment" data-aspect="{}" data-level="{level}" data-count="{n}" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                a.key(),
                num(x),
                num(y),
                num(BAR_WIDTH),
                num(h),
                LEVEL_COLORS[level as usize]
            );
        }
        let _ = writeln!(
            s,
            r#"    <text x="{}" y="{}" text-anchor="middle" font-size="11" {FONT}>{}</text>"#,
            num(x + BAR_WIDTH / 2.0),
            num(base + 16.0),
            a.code()
        );
    }
    let _ = writeln!(s, "  </g>");
    let _ = writeln!(s, r#"  <g class="data-table" font-size="11" {FONT}>"#);
    for (row, label) in ["L2", "L1", "L0"].iter().enumerate() {
        let level = 2 - row as u8;
        let y = table_top + row as f64 * 20.0;
        let _ = writeln!(
            s,
            r#"    <rect x="{}" y="{}" width="10" height="10" fill="{}"/>"#,
            num(BAR_LEFT - 56.0),
            num(y - 9.0),
            LEVEL_COLORS[level as usize]
        );
        let _ = writeln!(s, r#"    <text x="{}" y="{}">{label}</text>"#, num(BAR_LEFT - 40.0), num(y));
        for (i, a) in AspectId::ALL.iter().enumerate() {
            let n = dist.per_aspect.get(a).copied().unwrap_or_default().get(level);
            let x = BAR_LEFT + i as f64 * (BAR_WIDTH + BAR_GAP) + BAR_WIDTH / 2.0;
            let _ = writeln!(
                s,
                r#"    <text class="cell" data-aspect="{}" data-level="{level}" x="{}" y="{}" text-anchor="middle">{n}</text>"#,
                a.key(),
                num(x),
                num(y)
            );
        }
    }
    let _ = writeln!(s, "  </g>");
    s.push_str("</svg>\n");
    s
}

/// Markdown table: one row per profile, AU and AL columns per aspect, grouped by viewpoint.
pub fn render_table(profiles: &[SystemProfile]) -> String {
    let mut header = vec!["System".to_string()];
    for v in Viewpoint::ALL {
        for a in v.aspects() {
            header.push(format!("{}: {} AU", v.short(), a.code()));
            header.push(format!("{}: {} AL", v.short(), a.code()));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for p in profiles {
        let mut row = vec![p.name.replace('|', "\\|")];
        for v in Viewpoint::ALL {
            for a in v.aspects() {
                row.push(p.autonomy(a).ordinal().to_string());
                row.push(p.alignment(a).ordinal().to_string());
            }
        }
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{builtin, builtin_profiles, llm_builtins};
    use crate::taxonomy::AspectConfig;

    #[test]
    fn empty_distribution() {
        let d = level_distribution(&[], Dimension::Autonomy);
        assert_eq!(d.population, 0);
        assert!(d.per_aspect.values().all(|c| c.total() == 0));
        let svg = render_bars(&d);
        assert!(!svg.contains("class=\"segment\""));
        assert_eq!(svg.matches("class=\"cell\"").count(), 36);
    }

    #[test]
    fn distribution_counts_sum_to_population() {
        for dim in [Dimension::Autonomy, Dimension::Alignment] {
            let d = level_distribution(&builtin_profiles(), dim);
            assert!(d.per_aspect.values().all(|c| c.total() == 8));
        }
        let d = level_distribution(&llm_builtins(), Dimension::Autonomy);
        assert_eq!(d.per_aspect[&AspectId::Decom], LevelCounts { l0: 0, l1: 0, l2: 7 });
    }

    #[test]
    fn full_bar_for_unanimous_aspect() {
        let d = level_distribution(&llm_builtins(), Dimension::Autonomy);
        let svg = render_bars(&d);
        let line = svg.lines().find(|l| l.contains(r#"data-aspect="decom" data-level="2""#) && l.contains("rect")).unwrap();
        assert!(line.contains(r#"height="240.00""#), "{line}");
    }

    #[test]
    fn radar_is_deterministic_and_has_twelve_axes() {
        let p = builtin("Auto-GPT").unwrap();
        let a = render_radar(&p);
        assert_eq!(a, render_radar(&p));
        assert_eq!(a.matches("class=\"axis\"").count(), 12);
        assert_eq!(a.matches("class=\"ring\"").count(), 3);
        assert!(a.contains("stroke-dasharray"));
    }

    #[test]
    fn uniform_profile_gives_regular_polygon() {
        let p = SystemProfile::uniform("ones", AspectConfig::from_ordinals(1, 1).unwrap());
        let svg = render_radar(&p);
        let pts = polygon_points(&[1; 12]);
        assert_eq!(svg.matches(&pts).count(), 2);
    }

    #[test]
    fn table_shapes() {
        let t = render_table(&[]);
        assert_eq!(t.lines().count(), 2);
        let t = render_table(&builtin_profiles()[..1]);
        assert_eq!(t.lines().count(), 3);
        assert_eq!(t.lines().next().unwrap().matches(" | ").count(), 24);
    }

    #[test]
    fn numbers_never_negative_zero() {
        assert_eq!(num(-0.000001), "0.00");
        assert_eq!(num(1.005), "1.00");
    }
}
