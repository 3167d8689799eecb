//! Marlin-flavoured G-code: emission from layer toolpaths and parsing back.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use super::geom::P2;
use super::{LayerSlice, SliceConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Comment(String),
    /// G0 (rapid) or G1.
    Move {
        rapid: bool,
        x: Option<f64>,
        y: Option<f64>,
        z: Option<f64>,
        e: Option<f64>,
        f: Option<f64>,
    },
    /// G28 with an optional axis list such as "X Y".
    Home(String),
    /// G92 E.
    ResetExtruder(f64),
    /// G21.
    Millimetres,
    /// G90.
    AbsolutePositioning,
    /// M82.
    AbsoluteExtrusion,
    /// M104 / M109.
    Hotend { celsius: f64, wait: bool },
    /// M140 / M190.
    Bed { celsius: f64, wait: bool },
    /// M84.
    MotorsOff,
    /// Anything outside the dialect, kept verbatim.
    Unknown(String),
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Comment(c) => write!(f, ";{c}"),
            Command::Move { rapid, x, y, z, e, f: feed } => {
                write!(f, "{}", if *rapid { "G0" } else { "G1" })?;
                for (axis, v, prec) in [('X', x, 3), ('Y', y, 3), ('Z', z, 3), ('E', e, 5), ('F', feed, 0)] {
                    if let Some(v) = v {
                        write!(f, " {axis}{v:.prec$}")?;
                    }
                }
                Ok(())
            }
            Command::Home(axes) if axes.is_empty() => write!(f, "G28"),
            Command::Home(axes) => write!(f, "G28 {axes}"),
            Command::ResetExtruder(e) => write!(f, "G92 E{e:.5}"),
            Command::Millimetres => write!(f, "G21"),
            Command::AbsolutePositioning => write!(f, "G90"),
            Command::AbsoluteExtrusion => write!(f, "M82"),
            Command::Hotend { celsius, wait } => write!(f, "{} S{celsius:.0}", if *wait { "M109" } else { "M104" }),
            Command::Bed { celsius, wait } => write!(f, "{} S{celsius:.0}", if *wait { "M190" } else { "M140" }),
            Command::MotorsOff => write!(f, "M84"),
            Command::Unknown(line) => write!(f, "{line}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolpathProgram {
    pub commands: Vec<Command>,
    /// Filament pushed by extruding moves, retractions excluded (mm).
    pub total_extruded_mm: f64,
    pub filament_volume_mm3: f64,
    pub layer_count: usize,
}

impl ToolpathProgram {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.commands {
            out.push_str(&c.to_string());
            out.push('\n');
        }
        out
    }

    pub fn unknown_commands(&self) -> usize {
        self.commands.iter().filter(|c| matches!(c, Command::Unknown(_))).count()
    }

    /// E may only go down on a stationary retraction, and must be restored
    /// before the next extruding move.
    pub fn extrusion_is_monotonic(&self) -> bool {
        let mut e = 0.0;
        let mut high_water: f64 = 0.0;
        for c in &self.commands {
            match c {
                Command::ResetExtruder(v) => {
                    e = *v;
                    high_water = *v;
                }
                Command::Move { x, y, e: Some(next), .. } => {
                    let moves_xy = x.is_some() || y.is_some();
                    if *next < e && moves_xy {
                        return false;
                    }
                    if moves_xy && e < high_water - 1e-9 {
                        return false;
                    }
                    e = *next;
                    high_water = high_water.max(e);
                }
                _ => {}
            }
        }
        true
    }

    /// Every commanded coordinate within `[0, size]` per axis.
    pub fn within_build_volume(&self, size: [f64; 3]) -> bool {
        self.commands.iter().all(|c| match c {
            Command::Move { x, y, z, .. } => [x, y, z]
                .iter()
                .zip(size)
                .all(|(v, max)| v.is_none_or(|v| (-1e-9..=max + 1e-9).contains(&v))),
            _ => true,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcodeError {
    #[error("line {line}: malformed word `{word}`")]
    Malformed { line: usize, word: String },
    #[error("point ({x:.3}, {y:.3}, {z:.3}) lies outside the build volume")]
    OutsideBuildVolume { x: f64, y: f64, z: f64 },
}

/// Filament length for extruding a bead of `length` mm.
pub fn extrusion_length(length: f64, config: &SliceConfig) -> f64 {
    length * config.layer_height * config.extrusion_width / filament_area(config.filament_diameter)
}

fn filament_area(diameter: f64) -> f64 {
    PI * (diameter / 2.0).powi(2)
}

struct Emitter<'a> {
    cfg: &'a SliceConfig,
    out: Vec<Command>,
    pos: Option<P2>,
    z: f64,
    e: f64,
    extruded: f64,
}

impl Emitter<'_> {
    fn check(&self, p: P2) -> Result<(), GcodeError> {
        let [bx, by, bz] = self.cfg.build_volume;
        let ok = |v: f64, max: f64| (-1e-9..=max + 1e-9).contains(&v);
        if ok(p.x, bx) && ok(p.y, by) && ok(self.z, bz) {
            Ok(())
        } else {
            Err(GcodeError::OutsideBuildVolume { x: p.x, y: p.y, z: self.z })
        }
    }

    fn travel(&mut self, to: P2) -> Result<(), GcodeError> {
        self.check(to)?;
        let dist = self.pos.map_or(f64::INFINITY, |p| (to - p).norm());
        if dist <= 1e-9 {
            return Ok(());
        }
        let retract = dist > self.cfg.retract_min_travel && self.pos.is_some() && self.cfg.retract_length > 0.0;
        let stationary = |e: f64, f: f64| Command::Move {
            rapid: false,
            x: None,
            y: None,
            z: None,
            e: Some(e),
            f: Some(f),
        };
        if retract {
            self.out.push(stationary(self.e - self.cfg.retract_length, self.cfg.retract_speed));
        }
        self.out.push(Command::Move {
            rapid: true,
            x: Some(to.x),
            y: Some(to.y),
            z: None,
            e: None,
            f: Some(self.cfg.travel_speed),
        });
        if retract {
            self.out.push(stationary(self.e, self.cfg.retract_speed));
        }
        self.pos = Some(to);
        Ok(())
    }

    fn extrude_to(&mut self, to: P2) -> Result<(), GcodeError> {
        self.check(to)?;
        let from = self.pos.expect("travel precedes extrusion");
        let de = extrusion_length((to - from).norm(), self.cfg);
        self.e += de;
        self.extruded += de;
        self.out.push(Command::Move {
            rapid: false,
            x: Some(to.x),
            y: Some(to.y),
            z: None,
            e: Some(self.e),
            f: Some(self.cfg.print_speed),
        });
        self.pos = Some(to);
        Ok(())
    }

    fn path(&mut self, points: &[P2]) -> Result<(), GcodeError> {
        let Some((&first, rest)) = points.split_first() else {
            return Ok(());
        };
        self.travel(first)?;
        for &p in rest {
            self.extrude_to(p)?;
        }
        Ok(())
    }
}

fn header(cfg: &SliceConfig) -> Vec<Command> {
    let mut out = vec![Command::Comment(" generated by remixd".into())];
    for (k, v) in cfg.summary() {
        out.push(Command::Comment(format!(" {k} = {v}")));
    }
    out.extend([
        Command::Millimetres,
        Command::AbsolutePositioning,
        Command::AbsoluteExtrusion,
        Command::Bed { celsius: cfg.bed_temp, wait: false },
        Command::Bed { celsius: cfg.bed_temp, wait: true },
        Command::Hotend { celsius: cfg.nozzle_temp, wait: false },
        Command::Hotend { celsius: cfg.nozzle_temp, wait: true },
        Command::Home(String::new()),
        Command::ResetExtruder(0.0),
    ]);
    out
}

fn footer() -> Vec<Command> {
    vec![
        Command::Comment(" end".into()),
        Command::Hotend { celsius: 0.0, wait: false },
        Command::Bed { celsius: 0.0, wait: false },
        Command::Home("X Y".into()),
        Command::MotorsOff,
    ]
}

/// Turns layer toolpaths into a program. Per layer: perimeters (outermost
/// first), then infill, then supports. Infill and support lines alternate
/// direction to keep travels short.
pub fn emit_gcode(layers: &[LayerSlice], cfg: &SliceConfig) -> Result<ToolpathProgram, GcodeError> {
    let mut em = Emitter {
        cfg,
        out: header(cfg),
        pos: None,
        z: 0.0,
        e: 0.0,
        extruded: 0.0,
    };
    for layer in layers {
        em.z = (layer.index + 1) as f64 * cfg.layer_height;
        em.out.push(Command::Comment(format!(" LAYER {} z={:.3}", layer.index, em.z)));
        em.out.push(Command::Move {
            rapid: true,
            x: None,
            y: None,
            z: Some(em.z),
            e: None,
            f: Some(cfg.travel_speed),
        });
        if em.z > cfg.build_volume[2] + 1e-9 {
            let p = em.pos.unwrap_or_default();
            return Err(GcodeError::OutsideBuildVolume { x: p.x, y: p.y, z: em.z });
        }
        for ring in &layer.perimeters {
            em.path(&ring.closed_points())?;
        }
        for (i, seg) in layer.infill.iter().chain(&layer.support).enumerate() {
            if i % 2 == 0 {
                em.path(seg)?;
            } else {
                em.path(&[seg[1], seg[0]])?;
            }
        }
    }
    em.out.extend(footer());
    Ok(ToolpathProgram {
        commands: em.out,
        total_extruded_mm: em.extruded,
        filament_volume_mm3: em.extruded * filament_area(cfg.filament_diameter),
        layer_count: layers.len(),
    })
}

fn parse_value(word: &str, line: usize) -> Result<f64, GcodeError> {
    word[1..]
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| GcodeError::Malformed {
            line,
            word: word.to_string(),
        })
}

fn parse_line(text: &str, line: usize) -> Result<Command, GcodeError> {
    if let Some(c) = text.strip_prefix(';') {
        return Ok(Command::Comment(c.to_string()));
    }
    let mut words = text.split_whitespace();
    let Some(head) = words.next() else {
        return Ok(Command::Unknown(text.to_string()));
    };
    let rest: Vec<&str> = words.collect();
    let s_value = || -> Result<Option<f64>, GcodeError> {
        match rest.as_slice() {
            [w] if w.starts_with('S') => parse_value(w, line).map(Some),
            _ => Ok(None),
        }
    };
    let cmd = match head {
        "G0" | "G1" => {
            let (mut x, mut y, mut z, mut e, mut f) = (None, None, None, None, None);
            for w in &rest {
                let slot = match w.chars().next() {
                    Some('X') => &mut x,
                    Some('Y') => &mut y,
                    Some('Z') => &mut z,
                    Some('E') => &mut e,
                    Some('F') => &mut f,
                    _ => {
                        return Err(GcodeError::Malformed {
                            line,
                            word: w.to_string(),
                        })
                    }
                };
                *slot = Some(parse_value(w, line)?);
            }
            Command::Move {
                rapid: head == "G0",
                x,
                y,
                z,
                e,
                f,
            }
        }
        "G28" => Command::Home(rest.join(" ")),
        "G92" => match rest.as_slice() {
            [w] if w.starts_with('E') => Command::ResetExtruder(parse_value(w, line)?),
            _ => Command::Unknown(text.to_string()),
        },
        "G21" if rest.is_empty() => Command::Millimetres,
        "G90" if rest.is_empty() => Command::AbsolutePositioning,
        "M82" if rest.is_empty() => Command::AbsoluteExtrusion,
        "M84" if rest.is_empty() => Command::MotorsOff,
        "M104" | "M109" | "M140" | "M190" => match s_value()? {
            Some(celsius) => {
                let wait = head == "M109" || head == "M190";
                if head == "M104" || head == "M109" {
                    Command::Hotend { celsius, wait }
                } else {
                    Command::Bed { celsius, wait }
                }
            }
            None => Command::Unknown(text.to_string()),
        },
        _ => Command::Unknown(text.to_string()),
    };
    Ok(cmd)
}

/// Parses the emitted dialect. Extrusion totals are recomputed from the E
/// words; the filament diameter comes from the header comment when present.
pub fn parse_gcode(text: &str) -> Result<ToolpathProgram, GcodeError> {
    let mut prog = ToolpathProgram::default();
    let mut diameter = SliceConfig::default().filament_diameter;
    let mut e = 0.0;
    for (i, raw) in text.lines().enumerate() {
        let cmd = parse_line(raw.trim_end(), i + 1)?;
        match &cmd {
            Command::Comment(c) => {
                let c = c.trim();
                if c.starts_with("LAYER ") {
                    prog.layer_count += 1;
                } else if let Some(v) = c.strip_prefix("filament_diameter = ") {
                    diameter = v.parse().unwrap_or(diameter);
                }
            }
            Command::ResetExtruder(v) => e = *v,
            Command::Move { x, y, e: Some(next), .. } => {
                if (x.is_some() || y.is_some()) && *next > e {
                    prog.total_extruded_mm += next - e;
                }
                e = *next;
            }
            _ => {}
        }
        prog.commands.push(cmd);
    }
    prog.filament_volume_mm3 = prog.total_extruded_mm * filament_area(diameter);
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicer::geom::Polygon2;

    fn one_segment_layer() -> LayerSlice {
        LayerSlice {
            infill: vec![[P2::new(100.0, 100.0), P2::new(110.0, 100.0)]],
            ..LayerSlice::empty(0, 0.1)
        }
    }

    #[test]
    fn single_segment_extrusion_matches_formula() {
        let cfg = SliceConfig::default();
        let prog = emit_gcode(&[one_segment_layer()], &cfg).unwrap();
        let oracle = 10.0 * 0.2 * 0.4 / (PI * 0.875 * 0.875);
        assert!((oracle - 0.33260).abs() < 1e-4);
        assert!((prog.total_extruded_mm - oracle).abs() < 1e-12);
    }

    #[test]
    fn empty_program_is_header_and_footer() {
        let prog = emit_gcode(&[], &SliceConfig::default()).unwrap();
        assert_eq!(prog.total_extruded_mm, 0.0);
        let text = prog.to_text();
        assert!(text.contains("G28\n") && text.ends_with("M84\n"));
    }

    #[test]
    fn parse_emit_is_identity_on_dialect() {
        let mut layer = one_segment_layer();
        layer.perimeters.push(Polygon2::new(vec![
            P2::new(50.0, 50.0),
            P2::new(60.0, 50.0),
            P2::new(60.0, 60.0),
        ]));
        let cfg = SliceConfig::default();
        let text = emit_gcode(&[layer], &cfg).unwrap().to_text();
        let parsed = parse_gcode(&text).unwrap();
        assert_eq!(parsed.to_text(), text);
        assert_eq!(parsed.unknown_commands(), 0);
        assert!(parsed.extrusion_is_monotonic());
        assert_eq!(parsed.layer_count, 1);
    }

    #[test]
    fn plain_move_parses() {
        let prog = parse_gcode("G92 E0\nG0 X0 Y0\nG1 X10 Y0 E0.3326").unwrap();
        assert!((prog.total_extruded_mm - 0.3326).abs() < 1e-12);
        match &prog.commands[2] {
            Command::Move { rapid: false, x: Some(x), .. } => assert_eq!(*x, 10.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_word_reports_line() {
        let err = parse_gcode("G28\nG1 X=>").unwrap_err();
        assert_eq!(err, GcodeError::Malformed { line: 2, word: "X=>".into() });
    }

    #[test]
    fn unknown_commands_survive_verbatim() {
        let prog = parse_gcode("M107\nT0").unwrap();
        assert_eq!(prog.unknown_commands(), 2);
        assert_eq!(prog.to_text(), "M107\nT0\n");
    }

    #[test]
    fn long_travel_retracts_and_restores() {
        let layer = LayerSlice {
            infill: vec![
                [P2::new(10.0, 10.0), P2::new(20.0, 10.0)],
                [P2::new(50.0, 50.0), P2::new(60.0, 50.0)],
            ],
            ..LayerSlice::empty(0, 0.1)
        };
        let prog = emit_gcode(&[layer], &SliceConfig::default()).unwrap();
        let retractions = prog
            .commands
            .iter()
            .filter(|c| matches!(c, Command::Move { x: None, y: None, z: None, e: Some(_), .. }))
            .count();
        assert_eq!(retractions, 2);
        assert!(prog.extrusion_is_monotonic());
    }

    #[test]
    fn outside_build_volume_is_rejected() {
        let layer = LayerSlice {
            infill: vec![[P2::new(-5.0, 10.0), P2::new(20.0, 10.0)]],
            ..LayerSlice::empty(0, 0.1)
        };
        assert!(matches!(
            emit_gcode(&[layer], &SliceConfig::default()),
            Err(GcodeError::OutsideBuildVolume { .. })
        ));
    }
}
