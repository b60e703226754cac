//! BVH motion capture text format.

use std::fmt::Write as _;
use std::path::Path;

use gesture_core::motion::{Channel, Joint, MotionClip, Skeleton, Vec3};

use crate::error::{parse_err, Error, Result};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            current: 0,
        }
    }

    /// Next non-blank line, split into whitespace tokens.
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, line) in self.inner.by_ref() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.is_empty() {
                self.current = i + 1;
                return Some(toks);
            }
        }
        None
    }

    fn expect_tokens(&mut self, what: &str) -> Result<Vec<&'a str>> {
        let line = self.current;
        self.next_tokens()
            .ok_or_else(|| parse_err(line + 1, format!("unexpected end of file, expected {what}")))
    }
}

fn number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("`{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn offset(toks: &[&str], line: usize) -> Result<Vec3> {
    if toks.len() != 4 {
        return Err(parse_err(line, "OFFSET needs three values"));
    }
    Ok([number(toks[1], line)?, number(toks[2], line)?, number(toks[3], line)?])
}

fn parse_joint(
    lines: &mut Lines,
    name: String,
    parent: Option<usize>,
    joints: &mut Vec<(Joint, usize)>,
) -> Result<()> {
    let open = lines.expect_tokens("`{`")?;
    if open != ["{"] {
        return Err(parse_err(lines.current, format!("expected `{{` after joint `{name}`")));
    }
    let toks = lines.expect_tokens("OFFSET")?;
    if toks[0] != "OFFSET" {
        return Err(parse_err(lines.current, format!("expected OFFSET for joint `{name}`")));
    }
    let off = offset(&toks, lines.current)?;
    let toks = lines.expect_tokens("CHANNELS")?;
    let line = lines.current;
    if toks[0] != "CHANNELS" || toks.len() < 2 {
        return Err(parse_err(line, format!("expected CHANNELS for joint `{name}`")));
    }
    let count: usize = toks[1]
        .parse()
        .map_err(|_| parse_err(line, format!("bad channel count `{}`", toks[1])))?;
    if toks.len() != count + 2 {
        return Err(parse_err(
            line,
            format!("CHANNELS declares {count} channels but lists {}", toks.len() - 2),
        ));
    }
    let channels = toks[2..]
        .iter()
        .map(|t| Channel::from_label(t).ok_or_else(|| parse_err(line, format!("unknown channel `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    let index = joints.len();
    joints.push((
        Joint {
            name,
            parent,
            offset: off,
            channels,
            end_site: None,
        },
        line,
    ));
    loop {
        let toks = lines.expect_tokens("`}`")?;
        match toks[0] {
            "}" => return Ok(()),
            "JOINT" if toks.len() == 2 => {
                parse_joint(lines, toks[1].to_string(), Some(index), joints)?;
            }
            "End" if toks.len() == 2 && toks[1] == "Site" => {
                if lines.expect_tokens("`{`")? != ["{"] {
                    return Err(parse_err(lines.current, "expected `{` after End Site"));
                }
                let toks = lines.expect_tokens("OFFSET")?;
                if toks[0] != "OFFSET" {
                    return Err(parse_err(lines.current, "expected OFFSET in End Site"));
                }
                joints[index].0.end_site = Some(offset(&toks, lines.current)?);
                if lines.expect_tokens("`}`")? != ["}"] {
                    return Err(parse_err(lines.current, "expected `}` closing End Site"));
                }
            }
            other => {
                return Err(parse_err(lines.current, format!("unexpected `{other}` in joint block")));
            }
        }
    }
}

/// Parse a BVH document. Errors carry 1-based line numbers.
pub fn parse_bvh(text: &str) -> Result<MotionClip> {
    let mut lines = Lines::new(text);
    if lines.expect_tokens("HIERARCHY")? != ["HIERARCHY"] {
        return Err(parse_err(lines.current, "expected HIERARCHY"));
    }
    let toks = lines.expect_tokens("ROOT")?;
    if toks.len() != 2 || toks[0] != "ROOT" {
        return Err(parse_err(lines.current, "expected `ROOT <name>`"));
    }
    let mut joints = Vec::new();
    parse_joint(&mut lines, toks[1].to_string(), None, &mut joints)?;
    let root_line = joints[0].1;
    let skeleton = Skeleton::new(joints.into_iter().map(|(j, _)| j).collect())
        .map_err(|e| parse_err(root_line, e.to_string()))?;

    if lines.expect_tokens("MOTION")? != ["MOTION"] {
        return Err(parse_err(lines.current, "expected MOTION"));
    }
    let toks = lines.expect_tokens("Frames:")?;
    if toks.len() != 2 || toks[0] != "Frames:" {
        return Err(parse_err(lines.current, "expected `Frames: <count>`"));
    }
    let frames: usize = toks[1]
        .parse()
        .map_err(|_| parse_err(lines.current, format!("bad frame count `{}`", toks[1])))?;
    let toks = lines.expect_tokens("Frame Time:")?;
    if toks.len() != 3 || toks[0] != "Frame" || toks[1] != "Time:" {
        return Err(parse_err(lines.current, "expected `Frame Time: <seconds>`"));
    }
    let frame_time = number(toks[2], lines.current)?;
    if frame_time <= 0.0 {
        return Err(parse_err(lines.current, format!("frame time {frame_time} must be positive")));
    }
    let channels = skeleton.channel_count();
    let mut values = Vec::with_capacity(frames * channels);
    for f in 0..frames {
        let toks = lines.next_tokens().ok_or_else(|| {
            parse_err(lines.current + 1, format!("expected {frames} frames, found {f}"))
        })?;
        if toks.len() != channels {
            return Err(parse_err(
                lines.current,
                format!("frame {f} has {} values, expected {channels}", toks.len()),
            ));
        }
        for t in toks {
            values.push(number(t, lines.current)?);
        }
    }
    if lines.next_tokens().is_some() {
        return Err(parse_err(lines.current, format!("more frame lines than the declared {frames}")));
    }
    MotionClip::new(skeleton, frame_time, values).map_err(Error::from)
}

fn write_joint(out: &mut String, skeleton: &Skeleton, index: usize, depth: usize) {
    let joint = &skeleton.joints()[index];
    let pad = "\t".repeat(depth);
    let kind = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let o = joint.offset;
    let _ = writeln!(out, "{pad}{kind} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}\tOFFSET {} {} {}", o[0], o[1], o[2]);
    let labels: Vec<&str> = joint.channels.iter().map(|c| c.label()).collect();
    let _ = writeln!(out, "{pad}\tCHANNELS {} {}", labels.len(), labels.join(" "));
    for (child, j) in skeleton.joints().iter().enumerate() {
        if j.parent == Some(index) {
            write_joint(out, skeleton, child, depth + 1);
        }
    }
    if let Some(e) = joint.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {} {} {}", e[0], e[1], e[2]);
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}

/// HIERARCHY section only.
pub fn write_hierarchy(skeleton: &Skeleton) -> String {
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    out
}

/// Serialize with shortest round-trip float formatting.
pub fn write_bvh(clip: &MotionClip) -> String {
    let mut out = write_hierarchy(&clip.skeleton);
    let n = clip.num_frames();
    let _ = writeln!(out, "MOTION\nFrames: {n}\nFrame Time: {}", clip.frame_time);
    for t in 0..n {
        let row: Vec<String> = clip.frame(t).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Skeleton from a hierarchy-only document (as produced by [`write_hierarchy`]).
pub fn parse_hierarchy(text: &str) -> Result<Skeleton> {
    let doc = format!("{text}MOTION\nFrames: 0\nFrame Time: 1\n");
    Ok(parse_bvh(&doc)?.skeleton)
}

pub fn load_bvh(path: &Path) -> Result<MotionClip> {
    let text = crate::error::read_text(path)?;
    parse_bvh(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Format(format!("{}:{line}: {message}", path.display())),
        other => other,
    })
}

pub fn save_bvh(path: &Path, clip: &MotionClip) -> Result<()> {
    crate::error::write(path, write_bvh(clip))
}
