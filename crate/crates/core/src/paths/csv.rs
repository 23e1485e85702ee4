//! Plain-text path format: header `t,value,is_jump,left_value`, one row per
//! sample, `is_jump` as `0`/`1` and `left_value` empty away from jumps.
//! Floats use the shortest representation that round-trips exactly.

use std::io::{BufRead, Write};

use super::cadlag::CadlagPath;
use crate::error::{Error, Result};

pub const HEADER: &str = "t,value,is_jump,left_value";

pub fn write_path<W: Write>(path: &CadlagPath, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    for i in 0..path.len() {
        let (t, v) = (path.times()[i], path.values()[i]);
        if path.is_jump(i) {
            writeln!(out, "{t:?},{v:?},1,{:?}", path.left_values()[i])?;
        } else {
            writeln!(out, "{t:?},{v:?},0,")?;
        }
    }
    Ok(())
}

pub fn read_path<R: BufRead>(input: R) -> Result<CadlagPath> {
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HEADER => {}
        Some(Ok(h)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{HEADER}`, found `{h}`"),
            })
        }
        Some(Err(e)) => return Err(e.into()),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty input".into(),
            })
        }
    }
    let (mut times, mut values, mut left, mut jump) = (vec![], vec![], vec![], vec![]);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: lineno, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let t = num(fields[0])?;
        let v = num(fields[1])?;
        let is_jump = match fields[2].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(bad(format!("is_jump must be 0 or 1, found `{other}`"))),
        };
        let l = if is_jump { num(fields[3])? } else { v };
        times.push(t);
        values.push(v);
        left.push(l);
        jump.push(is_jump);
    }
    CadlagPath::from_parts(times, values, left, jump)
}

pub fn write_path_file(path: &CadlagPath, file: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(file)?;
    let mut w = std::io::BufWriter::new(f);
    write_path(path, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_path_file(file: &std::path::Path) -> Result<CadlagPath> {
    let f = std::fs::File::open(file)?;
    read_path(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_documented_layout() {
        let p = CadlagPath::step(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_path(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,value,is_jump,left_value\n0.0,0.0,0,\n0.5,1.0,1,0.0\n1.0,1.0,0,\n"
        );
    }

    #[test]
    fn rejects_wrong_header_and_bad_rows() {
        assert!(read_path("a,b\n".as_bytes()).is_err());
        let bad = format!("{HEADER}\n0.0,1.0,2,\n1.0,1.0,0,\n");
        assert!(matches!(read_path(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
