//! Text netlist format.
//!
//! ```text
//! REMAP <name> in=<w> out=<w>
//! L0: sbox4(C56B90AD3EF84712)@0-3 ; sbox3(36057142)@4-6
//! L1: pbox(3,0,2,1,...)@0-6
//! L2: csbox(7>3:0+1+2,3+4,5+6)@0-6
//! L3: xor_fold(4>2)@0-3
//! ```
//!
//! Bit ranges are inclusive and relative to the layer input. Blank lines and
//! lines starting with `#` are ignored.

use super::{Layer, LayeredFunction, Placement, Primitive};
use crate::error::{Error, Result};
use std::fmt::Write as _;

pub fn serialize_netlist(f: &LayeredFunction) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "REMAP {} in={} out={}", f.name(), f.input_width(), f.output_width());
    for (k, layer) in f.layers().iter().enumerate() {
        let parts: Vec<String> = layer.placements().iter().map(placement_text).collect();
        let _ = writeln!(s, "L{k}: {}", parts.join(" ; "));
    }
    s
}

fn placement_text(p: &Placement) -> String {
    let hi = p.lo + p.prim.input_width() - 1;
    let body = match &p.prim {
        Primitive::Sbox4(t) => format!("sbox4({})", hex_nibbles(t)),
        Primitive::Sbox3(t) => format!("sbox3({})", hex_nibbles(t)),
        Primitive::Pbox(perm) => {
            let v: Vec<String> = perm.iter().map(u16::to_string).collect();
            format!("pbox({})", v.join(","))
        }
        Primitive::Csbox { inputs, rows, .. } => {
            let r: Vec<String> = rows
                .iter()
                .map(|row| row.iter().map(u16::to_string).collect::<Vec<_>>().join("+"))
                .collect();
            format!("csbox({}>{}:{})", inputs, rows.len(), r.join(","))
        }
        Primitive::XorFold { half } => format!("xor_fold({}>{})", 2 * half, half),
    };
    format!("{body}@{}-{hi}", p.lo)
}

fn hex_nibbles(t: &[u8]) -> String {
    t.iter().map(|v| format!("{:X}", v)).collect()
}

pub fn parse_netlist(text: &str) -> Result<LayeredFunction> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));

    let header = lines.next().ok_or_else(|| Error::Netlist("no layers".into()))?;
    let (name, in_w, out_w) = parse_header(header)?;

    let mut f = LayeredFunction::new(name, in_w, Vec::new())?;
    for (k, line) in lines.enumerate() {
        let err = |msg: String| Error::NetlistLayer { layer: k, msg };
        let (label, body) = line
            .split_once(':')
            .ok_or_else(|| err("missing `L<k>:` label".into()))?;
        if label.trim() != format!("L{k}") {
            return Err(err(format!("expected label L{k}, found `{}`", label.trim())));
        }
        let mut placements = Vec::new();
        for item in body.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            placements.push(parse_placement(item).map_err(|e| err(e))?);
        }
        if placements.is_empty() {
            return Err(err("layer has no primitives".into()));
        }
        let width = f.output_width();
        for p in &placements {
            let end = p.lo + p.prim.input_width();
            if end > width {
                return Err(err(format!(
                    "placement ends at bit {} but layer input is {} bits wide",
                    end - 1,
                    width
                )));
            }
        }
        let layer = Layer::new(width, placements).map_err(|e| err(e.to_string()))?;
        f.push_layer(layer)?;
    }

    if f.layers().is_empty() {
        return Err(Error::Netlist("no layers".into()));
    }
    if f.output_width() != out_w {
        return Err(Error::NetlistLayer {
            layer: f.layers().len() - 1,
            msg: format!("final width {} does not match header out={}", f.output_width(), out_w),
        });
    }
    if let Some(bit) = f.unconsumed_output() {
        return Err(Error::Netlist(format!(
            "output bit {bit} is an input bit never consumed by any primitive"
        )));
    }
    Ok(f)
}

fn parse_header(line: &str) -> Result<(String, u32, u32)> {
    let mut it = line.split_whitespace();
    if it.next() != Some("REMAP") {
        return Err(Error::Netlist("header must start with REMAP".into()));
    }
    let name = it.next().ok_or_else(|| Error::Netlist("missing function name".into()))?;
    let mut in_w = None;
    let mut out_w = None;
    for kv in it {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Netlist(format!("bad header field `{kv}`")))?;
        let v: u32 = v
            .parse()
            .map_err(|_| Error::Netlist(format!("bad width in `{kv}`")))?;
        match k {
            "in" => in_w = Some(v),
            "out" => out_w = Some(v),
            _ => return Err(Error::Netlist(format!("unknown header field `{k}`"))),
        }
    }
    match (in_w, out_w) {
        (Some(i), Some(o)) => Ok((name.to_string(), i, o)),
        _ => Err(Error::Netlist("header needs in=<w> and out=<w>".into())),
    }
}

fn parse_placement(item: &str) -> std::result::Result<Placement, String> {
    let (prim_text, range) = item
        .rsplit_once('@')
        .ok_or_else(|| format!("`{item}` has no @<bit-range>"))?;
    let (lo, hi) = range
        .split_once('-')
        .ok_or_else(|| format!("bad bit range `{range}`"))?;
    let lo: u32 = lo.trim().parse().map_err(|_| format!("bad bit range `{range}`"))?;
    let hi: u32 = hi.trim().parse().map_err(|_| format!("bad bit range `{range}`"))?;
    if hi < lo {
        return Err(format!("bad bit range `{range}`"));
    }

    let (kind, params) = prim_text
        .trim()
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(|| format!("bad primitive `{prim_text}`"))?;
    let prim = match kind.trim() {
        "sbox4" => Primitive::sbox4(nibbles::<16>(params)?),
        "sbox3" => Primitive::sbox3(nibbles::<8>(params)?),
        "pbox" => {
            let perm = params
                .split(',')
                .map(|s| s.trim().parse::<u16>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format!("bad pbox permutation `{params}`"))?;
            Primitive::pbox(perm)
        }
        "csbox" => {
            let (widths, wiring) = params
                .split_once(':')
                .ok_or_else(|| format!("csbox needs <in>><out>:<wiring>, got `{params}`"))?;
            let (m, n) = parse_arrow(widths)?;
            let rows = wiring
                .split(',')
                .map(|row| {
                    row.split('+')
                        .map(|s| s.trim().parse::<u16>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| format!("bad csbox wiring `{wiring}`"))?;
            if rows.len() as u32 != n {
                return Err(format!("csbox declares {n} outputs but wires {}", rows.len()));
            }
            Primitive::csbox(m, rows)
        }
        "xor_fold" => {
            let (m, n) = parse_arrow(params)?;
            if m != 2 * n {
                return Err(format!("xor_fold must halve its input, got {m}>{n}"));
            }
            Primitive::xor_fold(m)
        }
        other => return Err(format!("unknown primitive `{other}`")),
    }
    .map_err(|e| e.to_string())?;

    if hi - lo + 1 != prim.input_width() {
        return Err(format!(
            "bit range {lo}-{hi} covers {} bits but {} takes {}",
            hi - lo + 1,
            kind.trim(),
            prim.input_width()
        ));
    }
    Ok(Placement { lo, prim })
}

fn parse_arrow(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once('>').ok_or_else(|| format!("expected <in>><out>, got `{s}`"))?;
    let a = a.trim().parse().map_err(|_| format!("bad width `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad width `{b}`"))?;
    Ok((a, b))
}

fn nibbles<const N: usize>(s: &str) -> std::result::Result<[u8; N], String> {
    let s = s.trim();
    if s.len() != N {
        return Err(format!("expected {N} hex nibbles, got `{s}`"));
    }
    let mut t = [0u8; N];
    for (i, c) in s.chars().enumerate() {
        t[i] = c.to_digit(16).ok_or_else(|| format!("bad hex nibble `{c}`"))? as u8;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remap::sbox;

    const SMALL: &str = "\
REMAP demo in=8 out=3
# comment
L0: sbox4(C56B90AD3EF84712)@0-3 ; sbox4(EDB0214F7A859C36)@4-7
L1: pbox(7,6,5,4,3,2,1,0)@0-7
L2: csbox(8>3:0+1+2,3+4+5,6+7)@0-7
";

    #[test]
    fn parse_small() {
        let f = parse_netlist(SMALL).unwrap();
        assert_eq!(f.name(), "demo");
        assert_eq!(f.input_width(), 8);
        assert_eq!(f.output_width(), 3);
        assert_eq!(f.layers().len(), 3);
        match &f.layers()[0].placements()[0].prim {
            Primitive::Sbox4(t) => assert_eq!(*t, sbox::PRESENT),
            p => panic!("unexpected {p:?}"),
        }
    }

    #[test]
    fn round_trip_text() {
        let f = parse_netlist(SMALL).unwrap();
        let text = serialize_netlist(&f);
        let g = parse_netlist(&text).unwrap();
        assert_eq!(f, g);
        assert_eq!(text, serialize_netlist(&g));
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(parse_netlist("").unwrap_err(), Error::Netlist("no layers".into()));
        assert_eq!(
            parse_netlist("REMAP x in=4 out=4\n").unwrap_err(),
            Error::Netlist("no layers".into())
        );
    }

    #[test]
    fn mismatched_layer_width_names_layer() {
        // L1 expects 8 bits but L0 already compressed to 4
        let text = "REMAP bad in=8 out=4\nL0: xor_fold(8>4)@0-7\nL1: pbox(0,1,2,3,4,5,6,7)@0-7\n";
        match parse_netlist(text) {
            Err(Error::NetlistLayer { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("expected layer error, got {other:?}"),
        }
    }

    #[test]
    fn out_width_mismatch() {
        let text = "REMAP bad in=8 out=3\nL0: xor_fold(8>4)@0-7\n";
        assert!(matches!(parse_netlist(text), Err(Error::NetlistLayer { layer: 0, .. })));
    }

    #[test]
    fn unconsumed_input_rejected() {
        let text = "REMAP bad in=8 out=8\nL0: sbox4(C56B90AD3EF84712)@0-3\n";
        assert!(matches!(parse_netlist(text), Err(Error::Netlist(_))));
    }

    #[test]
    fn malformed_items() {
        for body in [
            "sbox4(C56B)@0-3",
            "sbox4(C56B90AD3EF84712)@0-4",
            "sbox4(CCCCCCCCCCCCCCCC)@0-3",
            "pbox(0,0,1,2)@0-3",
            "csbox(4>2:0+1)@0-3",
            "xor_fold(4>3)@0-3",
            "nope(1)@0-0",
            "sbox4(C56B90AD3EF84712)",
        ] {
            let text = format!("REMAP bad in=4 out=4\nL0: {body}\n");
            assert!(
                matches!(parse_netlist(&text), Err(Error::NetlistLayer { layer: 0, .. })),
                "accepted `{body}`"
            );
        }
        assert!(parse_netlist("REMAP bad in=4 out=4\nL1: pbox(0,1,2,3)@0-3\n").is_err());
        assert!(parse_netlist("RMAP bad in=4 out=4\nL0: pbox(0,1,2,3)@0-3\n").is_err());
    }
}
