//! BVH subset reader/writer.
//!
//! Supported: `HIERARCHY` with `ROOT`/`JOINT`/`End Site`, `OFFSET`, `CHANNELS`
//! with 3 or 6 entries, and a `MOTION` block with `Frames:` and `Frame Time:`.
//! Angles are degrees on disk. Each joint's rotation channels are composed in
//! the order they are declared, then converted to the skeleton's intrinsic XYZ
//! Euler angles through the rotation matrix. Position channels are read and
//! discarded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Rotation3, Vector3};

use super::{Arm, Behaviour, MotionClip};
use crate::kinematics::{clamp_to_limits, Skeleton};
use crate::{Error, Result};

/// Maps BVH joint names to canonical joint names.
pub type NameTable = BTreeMap<String, String>;

/// Metadata a BVH file cannot carry.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipMeta {
    pub id: String,
    pub behaviour: Behaviour,
    pub arm: Arm,
    pub attributes: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct BvhImport {
    pub clip: MotionClip,
    /// One entry per BVH joint that had no mapping and was ignored.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Channel {
    Xpos,
    Ypos,
    Zpos,
    Xrot,
    Yrot,
    Zrot,
}

impl Channel {
    fn parse(s: &str) -> Option<Channel> {
        Some(match s {
            "Xposition" => Channel::Xpos,
            "Yposition" => Channel::Ypos,
            "Zposition" => Channel::Zpos,
            "Xrotation" => Channel::Xrot,
            "Yrotation" => Channel::Yrot,
            "Zrotation" => Channel::Zrot,
            _ => return None,
        })
    }
}

#[derive(Debug)]
struct BvhJoint {
    name: String,
    channels: Vec<Channel>,
    /// Column of this joint's first channel within a frame line.
    first_column: usize,
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(lines: &[(usize, &'a str)]) -> Self {
        let items = lines
            .iter()
            .flat_map(|(n, l)| l.split_whitespace().map(move |t| (*n, t)))
            .collect();
        Tokens {
            items,
            pos: 0,
            last_line: lines.last().map_or(1, |l| l.0),
        }
    }

    fn line(&self) -> usize {
        self.items.get(self.pos).map_or(self.last_line, |t| t.0)
    }

    fn next(&mut self) -> Result<&'a str> {
        let line = self.line();
        let t = self.items.get(self.pos).ok_or(Error::Parse {
            line,
            message: "unexpected end of hierarchy".into(),
        })?;
        self.pos += 1;
        Ok(t.1)
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|t| t.1)
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        let line = self.line();
        let got = self.next()?;
        if got != want {
            return Err(Error::Parse {
                line,
                message: format!("expected '{want}', found '{got}'"),
            });
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T> {
        let line = self.line();
        let t = self.next()?;
        t.parse().map_err(|_| Error::Parse {
            line,
            message: format!("expected a number, found '{t}'"),
        })
    }
}

fn parse_joint(tok: &mut Tokens, name: String, joints: &mut Vec<BvhJoint>, columns: &mut usize) -> Result<()> {
    tok.expect("{")?;
    tok.expect("OFFSET")?;
    for _ in 0..3 {
        tok.number::<f64>()?;
    }
    tok.expect("CHANNELS")?;
    let line = tok.line();
    let n: usize = tok.number()?;
    if n != 3 && n != 6 {
        return Err(Error::Parse {
            line,
            message: format!("joint '{name}' declares {n} channels; only 3 or 6 are supported"),
        });
    }
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        let line = tok.line();
        let c = tok.next()?;
        channels.push(Channel::parse(c).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown channel '{c}'"),
        })?);
    }
    joints.push(BvhJoint {
        name,
        channels,
        first_column: *columns,
    });
    *columns += n;
    loop {
        let line = tok.line();
        match tok.next()? {
            "JOINT" => {
                let child = tok.next()?.to_string();
                parse_joint(tok, child, joints, columns)?;
            }
            "End" => {
                tok.expect("Site")?;
                tok.expect("{")?;
                tok.expect("OFFSET")?;
                for _ in 0..3 {
                    tok.number::<f64>()?;
                }
                tok.expect("}")?;
            }
            "}" => return Ok(()),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unexpected token '{other}' in joint '{}'", joints.last().map_or("", |j| &j.name)),
                })
            }
        }
    }
}

/// Rotation of one joint from its channel values (degrees), composed in
/// declaration order.
fn channel_rotation(channels: &[Channel], values: &[f64]) -> Rotation3<f64> {
    let mut r = Rotation3::identity();
    for (c, v) in channels.iter().zip(values) {
        let axis = match c {
            Channel::Xrot => Vector3::x_axis(),
            Channel::Yrot => Vector3::y_axis(),
            Channel::Zrot => Vector3::z_axis(),
            _ => continue,
        };
        r *= Rotation3::from_axis_angle(&axis, v.to_radians());
    }
    r
}

/// Decomposes `r` into `(a, b, c)` with `r = Rx(a) * Ry(b) * Rz(c)`.
pub(crate) fn to_euler_xyz(r: &Rotation3<f64>) -> [f64; 3] {
    let m = r.matrix();
    let sb = m[(0, 2)].clamp(-1.0, 1.0);
    let b = sb.asin();
    if (1.0 - sb.abs()) > 1e-12 {
        let a = (-m[(1, 2)]).atan2(m[(2, 2)]);
        let c = (-m[(0, 1)]).atan2(m[(0, 0)]);
        [a, b, c]
    } else {
        // Gimbal lock: only a combination of a and c is observable; pin a = 0.
        let c = m[(1, 0)].atan2(m[(1, 1)]);
        [0.0, b, c]
    }
}

pub fn parse_bvh(text: &str, skeleton: &Skeleton, names: &NameTable, meta: ClipMeta) -> Result<BvhImport> {
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let motion_at = lines
        .iter()
        .position(|(_, l)| l.trim() == "MOTION")
        .ok_or(Error::Parse {
            line: lines.len().max(1),
            message: "missing MOTION section".into(),
        })?;

    let mut tok = Tokens::new(&lines[..motion_at]);
    tok.expect("HIERARCHY")?;
    tok.expect("ROOT")?;
    let root = tok.next()?.to_string();
    let mut joints = Vec::new();
    let mut columns = 0;
    parse_joint(&mut tok, root, &mut joints, &mut columns)?;
    if let Some(extra) = tok.peek() {
        return Err(Error::Parse {
            line: tok.line(),
            message: format!("unexpected '{extra}' after root joint"),
        });
    }

    let mut body = lines[motion_at + 1..].iter().filter(|(_, l)| !l.trim().is_empty());
    let (frames_line, frames_text) = body.next().ok_or(Error::Parse {
        line: lines[motion_at].0,
        message: "missing 'Frames:' line".into(),
    })?;
    let declared: usize = frames_text
        .trim()
        .strip_prefix("Frames:")
        .and_then(|v| v.trim().parse().ok())
        .ok_or(Error::Parse {
            line: *frames_line,
            message: format!("malformed frame count '{}'", frames_text.trim()),
        })?;
    let (time_line, time_text) = body.next().ok_or(Error::Parse {
        line: *frames_line,
        message: "missing 'Frame Time:' line".into(),
    })?;
    let frame_time: f64 = time_text
        .trim()
        .strip_prefix("Frame Time:")
        .and_then(|v| v.trim().parse().ok())
        .filter(|v: &f64| v.is_finite() && *v > 0.0)
        .ok_or(Error::Parse {
            line: *time_line,
            message: format!("malformed frame time '{}'", time_text.trim()),
        })?;

    let mut data: Vec<Vec<f64>> = Vec::with_capacity(declared);
    let mut last_line = *time_line;
    for (n, l) in body {
        last_line = *n;
        let row = l
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse {
                line: *n,
                message: "non-numeric value in frame data".into(),
            })?;
        if row.len() != columns {
            return Err(Error::Parse {
                line: *n,
                message: format!("frame has {} values, hierarchy declares {columns} channels", row.len()),
            });
        }
        data.push(row);
    }
    if data.len() != declared {
        return Err(Error::Parse {
            line: last_line,
            message: format!("found {} frames, header declares {declared}", data.len()),
        });
    }

    // Resolve the mapping: every table entry must exist on both sides.
    let mut targets: Vec<(usize, usize)> = Vec::new(); // (bvh joint, action offset)
    let mut warnings = Vec::new();
    for (bvh_name, canonical) in names {
        if !joints.iter().any(|j| &j.name == bvh_name) {
            return Err(Error::Mapping(format!("required joint '{bvh_name}' not present in BVH hierarchy")));
        }
        if skeleton.joint_index(canonical).is_none() {
            return Err(Error::Mapping(format!("'{bvh_name}' maps to unknown joint '{canonical}'")));
        }
    }
    for (i, j) in joints.iter().enumerate() {
        match names.get(&j.name) {
            Some(canonical) => match skeleton.action_offset(canonical) {
                Some(off) => targets.push((i, off)),
                None => warnings.push(format!("joint '{}' maps to non-actuated '{canonical}'; ignored", j.name)),
            },
            None => warnings.push(format!("joint '{}' has no mapping; ignored", j.name)),
        }
    }

    let dim = skeleton.action_dim();
    let mut frames = Vec::with_capacity(data.len());
    for row in &data {
        let mut raw = vec![0.0; dim];
        for &(ji, off) in &targets {
            let j = &joints[ji];
            let vals = &row[j.first_column..j.first_column + j.channels.len()];
            let e = to_euler_xyz(&channel_rotation(&j.channels, vals));
            raw[off..off + 3].copy_from_slice(&e);
        }
        frames.push(clamp_to_limits(skeleton, &raw)?);
    }
    let clip = MotionClip::new(
        skeleton,
        meta.id,
        meta.behaviour,
        meta.arm,
        meta.attributes,
        1.0 / frame_time,
        frames,
    )?;
    Ok(BvhImport { clip, warnings })
}

/// Writes `clip` as BVH using the skeleton's own joint names. Actuated joints
/// use `Xrotation Yrotation Zrotation`, which matches the in-memory Euler
/// convention one-to-one.
pub fn write_bvh(skeleton: &Skeleton, clip: &MotionClip) -> String {
    let joints = skeleton.joints();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); joints.len()];
    for (i, j) in joints.iter().enumerate() {
        if let Some(p) = j.parent {
            children[p].push(i);
        }
    }
    let mut out = String::from("HIERARCHY\n");
    let mut order = Vec::new();
    write_joint(&mut out, skeleton, &children, 0, 0, &mut order);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.frames.len());
    let _ = writeln!(out, "Frame Time: {}", 1.0 / clip.fps);
    for f in &clip.frames {
        let r = f.rotations();
        let mut vals: Vec<String> = Vec::new();
        for &j in &order {
            if j == 0 {
                vals.extend(joints[0].offset.iter().map(|v| v.to_string()));
            }
            match skeleton.action_offset(&joints[j].name) {
                Some(off) => vals.extend(r[off..off + 3].iter().map(|v| v.to_degrees().to_string())),
                None => vals.extend(["0", "0", "0"].map(String::from)),
            }
        }
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}

fn write_joint(out: &mut String, s: &Skeleton, children: &[Vec<usize>], j: usize, depth: usize, order: &mut Vec<usize>) {
    let pad = "  ".repeat(depth);
    let joint = &s.joints()[j];
    let kw = if j == 0 { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{kw} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let o = joint.offset;
    let _ = writeln!(out, "{pad}  OFFSET {} {} {}", o[0], o[1], o[2]);
    if j == 0 {
        let _ = writeln!(out, "{pad}  CHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation Zrotation");
    } else {
        let _ = writeln!(out, "{pad}  CHANNELS 3 Xrotation Yrotation Zrotation");
    }
    order.push(j);
    if children[j].is_empty() {
        let _ = writeln!(out, "{pad}  End Site");
        let _ = writeln!(out, "{pad}  {{");
        let _ = writeln!(out, "{pad}    OFFSET 0 0 0");
        let _ = writeln!(out, "{pad}  }}");
    }
    for &c in &children[j] {
        write_joint(out, s, children, c, depth + 1, order);
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Identity table for files written by [`write_bvh`].
pub fn identity_names(skeleton: &Skeleton) -> NameTable {
    skeleton
        .joints()
        .iter()
        .map(|j| (j.name.clone(), j.name.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::euler_xyz;
    use std::f64::consts::FRAC_PI_2;

    fn meta() -> ClipMeta {
        ClipMeta {
            id: "bvh".into(),
            behaviour: Behaviour::Wave,
            arm: Arm::Left,
            attributes: [0.5; 3],
        }
    }

    fn two_joint(channels: &str, frame: &str) -> String {
        format!(
            "HIERARCHY\nROOT Hips\n{{\n  OFFSET 0 0 0\n  CHANNELS 6 Xposition Yposition Zposition {channels}\n  JOINT Chest\n  {{\n    OFFSET 0 1 0\n    CHANNELS 3 Zrotation Xrotation Yrotation\n    End Site\n    {{\n      OFFSET 0 1 0\n    }}\n  }}\n}}\nMOTION\nFrames: 1\nFrame Time: 0.04\n{frame}\n"
        )
    }

    fn table(pairs: &[(&str, &str)]) -> NameTable {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn zero_channels_give_rest_pose() {
        let s = Skeleton::canonical();
        let text = two_joint("Zrotation Xrotation Yrotation", "0 0 0 0 0 0 0 0 0");
        let imp = parse_bvh(&text, &s, &table(&[("Chest", "spine")]), meta()).unwrap();
        assert_eq!(imp.clip.frames, vec![s.rest_pose()]);
        assert!((imp.clip.fps - 25.0).abs() < 1e-12);
        assert_eq!(imp.warnings.len(), 1);
    }

    #[test]
    fn root_yrotation_converts_to_radians() {
        let s = Skeleton::canonical();
        let text = two_joint("Zrotation Xrotation Yrotation", "0 0 0 0 0 90 0 0 0");
        let imp = parse_bvh(&text, &s, &table(&[("Hips", "spine")]), meta()).unwrap();
        let off = s.action_offset("spine").unwrap();
        let r = &imp.clip.frames[0].rotations()[off..off + 3];
        assert!((r[1] - FRAC_PI_2).abs() < 1e-9, "{r:?}");
        assert!(r[0].abs() < 1e-9 && r[2].abs() < 1e-9);
    }

    #[test]
    fn permuted_channels_go_through_matrices() {
        let s = Skeleton::canonical();
        let text = two_joint("Zrotation Xrotation Yrotation", "0 0 0 0 0 0 20 -30 15");
        let imp = parse_bvh(&text, &s, &table(&[("Chest", "spine")]), meta()).unwrap();
        let off = s.action_offset("spine").unwrap();
        let e = &imp.clip.frames[0].rotations()[off..off + 3];
        let expect = Rotation3::from_axis_angle(&Vector3::z_axis(), 20f64.to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), (-30f64).to_radians())
            * Rotation3::from_axis_angle(&Vector3::y_axis(), 15f64.to_radians());
        let got = euler_xyz(e[0], e[1], e[2]);
        assert!((got.matrix() - expect.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn euler_decomposition_roundtrip_including_gimbal() {
        for e in [[0.3, -0.4, 1.1], [-1.2, 0.9, -0.2], [0.0, FRAC_PI_2, 0.7], [0.0, -FRAC_PI_2, -0.3]] {
            let d = to_euler_xyz(&euler_xyz(e[0], e[1], e[2]));
            let a = euler_xyz(d[0], d[1], d[2]);
            let b = euler_xyz(e[0], e[1], e[2]);
            assert!((a.matrix() - b.matrix()).abs().max() < 1e-9, "{e:?} -> {d:?}");
        }
    }

    #[test]
    fn malformed_inputs() {
        let s = Skeleton::canonical();
        let names = table(&[("Chest", "spine")]);
        let short = two_joint("Zrotation Xrotation Yrotation", "0 0 0");
        assert!(matches!(parse_bvh(&short, &s, &names, meta()), Err(Error::Parse { line: 19, .. })));

        let two_frames = two_joint("Zrotation Xrotation Yrotation", "0 0 0 0 0 0 0 0 0\n0 0 0 0 0 0 0 0 0");
        assert!(matches!(parse_bvh(&two_frames, &s, &names, meta()), Err(Error::Parse { .. })));

        let bad_channel = two_joint("Zrotation Qrotation Yrotation", "0 0 0 0 0 0 0 0 0");
        assert!(matches!(parse_bvh(&bad_channel, &s, &names, meta()), Err(Error::Parse { line: 5, .. })));

        let no_motion = "HIERARCHY\nROOT Hips\n{\n}\n";
        assert!(matches!(parse_bvh(no_motion, &s, &names, meta()), Err(Error::Parse { .. })));

        let ok = two_joint("Zrotation Xrotation Yrotation", "0 0 0 0 0 0 0 0 0");
        let missing = table(&[("Neck", "neck")]);
        assert!(matches!(parse_bvh(&ok, &s, &missing, meta()), Err(Error::Mapping(_))));
        let unknown = table(&[("Chest", "tail")]);
        assert!(matches!(parse_bvh(&ok, &s, &unknown, meta()), Err(Error::Mapping(_))));
    }
}
