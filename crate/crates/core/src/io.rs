//! Plain-text persistence for spaces, labels, abstractions and controllers.
//!
//! Every file starts with a magic line (`imdpmat 1`, `imdpvec 1`,
//! `imdpspace 1`, `imdplabels 1`, `imdpctl 1`). Reals are written in
//! scientific notation with 17 significant digits, which round-trips every
//! `f64` bit-exactly. Lines starting with `#` and blank lines are ignored on
//! load. See `docs/file-formats.md` for the full grammar.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::abstraction::{AbstractionError, DenseMatrix, Imdp};
use crate::grid::{GridError, LabeledStates, Space};
use crate::synthesis::{Controller, Horizon, Mode, SpecKind};

pub const MATRIX_MAGIC: &str = "imdpmat 1";
pub const VECTOR_MAGIC: &str = "imdpvec 1";
pub const SPACE_MAGIC: &str = "imdpspace 1";
pub const LABELS_MAGIC: &str = "imdplabels 1";
pub const CONTROLLER_MAGIC: &str = "imdpctl 1";

/// File names inside an abstraction directory.
pub const STATE_SPACE_FILE: &str = "state_space.txt";
pub const INPUT_SPACE_FILE: &str = "input_space.txt";
pub const DISTURB_SPACE_FILE: &str = "disturb_space.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const CONTROLLER_FILE: &str = "controller.txt";
const MATRIX_FILES: [&str; 2] = ["t_min.txt", "t_max.txt"];
const VECTOR_FILES: [&str; 4] = ["r_min.txt", "r_max.txt", "a_min.txt", "a_max.txt"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Grid {
        path: PathBuf,
        #[source]
        source: GridError,
    },
    #[error("{path}: {source}")]
    Abstraction {
        path: PathBuf,
        #[source]
        source: AbstractionError,
    },
    #[error("{path}: invalid controller: {message}")]
    Controller { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats a real with 17 significant digits.
#[inline]
pub fn fmt_real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn join_reals(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 24);
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        fmt_real(&mut s, v);
    }
    s
}

fn join_ints(values: &[usize]) -> String {
    values
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

// ---- writers --------------------------------------------------------------

pub fn write_matrix<W: Write>(w: &mut W, m: &DenseMatrix) -> io::Result<()> {
    writeln!(w, "{MATRIX_MAGIC}")?;
    writeln!(w, "{} {}", m.rows, m.cols)?;
    let mut line = String::new();
    for r in 0..m.rows {
        line.clear();
        for (i, &v) in m.row(r).iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            fmt_real(&mut line, v);
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_vector<W: Write>(w: &mut W, v: &[f64]) -> io::Result<()> {
    writeln!(w, "{VECTOR_MAGIC}")?;
    writeln!(w, "{}", v.len())?;
    let mut line = String::new();
    for &x in v {
        line.clear();
        fmt_real(&mut line, x);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn write_space<W: Write>(w: &mut W, s: &Space) -> io::Result<()> {
    writeln!(w, "{SPACE_MAGIC}")?;
    writeln!(w, "dims {}", s.dims())?;
    writeln!(w, "lb {}", join_reals(s.lb()))?;
    writeln!(w, "ub {}", join_reals(s.ub()))?;
    writeln!(w, "eta {}", join_reals(s.eta()))
}

pub fn write_labels<W: Write>(w: &mut W, l: &LabeledStates) -> io::Result<()> {
    writeln!(w, "{LABELS_MAGIC}")?;
    writeln!(w, "total {}", l.total())?;
    for (name, list) in [("safe", &l.safe), ("target", &l.target), ("avoid", &l.avoid)] {
        if list.is_empty() {
            writeln!(w, "{name} 0")?;
        } else {
            writeln!(w, "{name} {} {}", list.len(), join_ints(list))?;
        }
    }
    Ok(())
}

pub fn write_controller<W: Write>(w: &mut W, c: &Controller) -> io::Result<()> {
    writeln!(w, "{CONTROLLER_MAGIC}")?;
    writeln!(w, "spec {}", c.spec.name())?;
    writeln!(w, "mode {}", c.mode.name())?;
    let mut eps = String::new();
    fmt_real(&mut eps, c.eps);
    writeln!(w, "eps {eps}")?;
    match c.horizon {
        Horizon::Infinite => writeln!(w, "horizon infinite")?,
        Horizon::Finite(k) => writeln!(w, "horizon {k}")?,
    }
    writeln!(w, "iterations {}", c.iterations)?;
    let with_inputs = c.policy.is_some() && c.input_space.is_some();
    writeln!(w, "policy {}", if with_inputs { "input" } else { "none" })?;
    let s = &c.state_space;
    writeln!(w, "state_dims {}", s.dims())?;
    writeln!(w, "state_lb {}", join_reals(s.lb()))?;
    writeln!(w, "state_ub {}", join_reals(s.ub()))?;
    writeln!(w, "state_eta {}", join_reals(s.eta()))?;
    match &c.input_space {
        Some(u) => {
            writeln!(w, "input_dims {}", u.dims())?;
            writeln!(w, "input_lb {}", join_reals(u.lb()))?;
            writeln!(w, "input_ub {}", join_reals(u.ub()))?;
            writeln!(w, "input_eta {}", join_reals(u.eta()))?;
        }
        None => writeln!(w, "input_dims 0")?,
    }
    writeln!(w, "rows {}", c.states.len())?;
    let mut x = vec![0.0; s.dims()];
    let mut u = Vec::new();
    let mut line = String::new();
    for (k, &idx) in c.states.iter().enumerate() {
        s.rep_point_into(idx, &mut x);
        line.clear();
        write!(line, "{idx}").expect("String write");
        for &v in &x {
            line.push(' ');
            fmt_real(&mut line, v);
        }
        if let (true, Some(space), Some(policy)) = (with_inputs, &c.input_space, &c.policy) {
            u.resize(space.dims(), 0.0);
            space.rep_point_into(policy[k], &mut u);
            for &v in &u {
                line.push(' ');
                fmt_real(&mut line, v);
            }
        }
        line.push(' ');
        fmt_real(&mut line, c.p_min[k]);
        line.push(' ');
        fmt_real(&mut line, c.p_max[k]);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn save_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), IoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn save_matrix(path: &Path, m: &DenseMatrix) -> Result<(), IoError> {
    save_with(path, |w| write_matrix(w, m))
}

pub fn save_vector(path: &Path, v: &[f64]) -> Result<(), IoError> {
    save_with(path, |w| write_vector(w, v))
}

pub fn save_space(path: &Path, s: &Space) -> Result<(), IoError> {
    save_with(path, |w| write_space(w, s))
}

pub fn save_labels(path: &Path, l: &LabeledStates) -> Result<(), IoError> {
    save_with(path, |w| write_labels(w, l))
}

pub fn save_controller(path: &Path, c: &Controller) -> Result<(), IoError> {
    save_with(path, |w| write_controller(w, c))
}

/// Writes every part of an abstraction into `dir`, creating it if needed.
pub fn save_imdp(dir: &Path, m: &Imdp) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_space(&dir.join(STATE_SPACE_FILE), &m.state_space)?;
    for (name, space) in [
        (INPUT_SPACE_FILE, &m.input_space),
        (DISTURB_SPACE_FILE, &m.disturb_space),
    ] {
        let path = dir.join(name);
        match space {
            Some(s) => save_space(&path, s)?,
            None => match fs::remove_file(&path) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(io_err(&path)(e)),
            },
        }
    }
    save_labels(&dir.join(LABELS_FILE), &m.labels)?;
    save_matrix(&dir.join(MATRIX_FILES[0]), &m.t_min)?;
    save_matrix(&dir.join(MATRIX_FILES[1]), &m.t_max)?;
    for (name, v) in VECTOR_FILES.iter().zip([&m.r_min, &m.r_max, &m.a_min, &m.a_max]) {
        save_vector(&dir.join(name), v)?;
    }
    Ok(())
}

// ---- readers --------------------------------------------------------------

/// Line source that skips comments and blank lines and tracks line numbers.
struct Lines<R> {
    inner: io::Lines<R>,
    path: PathBuf,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R, path: &Path) -> Self {
        Self {
            inner: reader.lines(),
            path: path.to_path_buf(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> IoError {
        IoError::Format {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<Option<String>, IoError> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(Err(e)) => return Err(io_err(&self.path)(e)),
                Some(Ok(l)) => {
                    self.line += 1;
                    let t = l.trim();
                    if t.is_empty() || t.starts_with('#') {
                        continue;
                    }
                    return Ok(Some(t.to_string()));
                }
            }
        }
    }

    fn expect_line(&mut self, what: &str) -> Result<String, IoError> {
        self.next_line()?
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn expect_magic(&mut self, magic: &str) -> Result<(), IoError> {
        let l = self.expect_line(magic)?;
        if l != magic {
            return Err(self.err(format!("expected header `{magic}`, found `{l}`")));
        }
        Ok(())
    }

    /// A `key value...` line; returns the values.
    fn keyed(&mut self, key: &str) -> Result<String, IoError> {
        let l = self.expect_line(key)?;
        let (k, rest) = l.split_once(char::is_whitespace).unwrap_or((l.as_str(), ""));
        if k != key {
            return Err(self.err(format!("expected `{key}`, found `{k}`")));
        }
        Ok(rest.trim().to_string())
    }

    fn expect_end(&mut self) -> Result<(), IoError> {
        if let Some(l) = self.next_line()? {
            return Err(self.err(format!("unexpected trailing content `{l}`")));
        }
        Ok(())
    }

    fn reals(&self, text: &str, expected: usize) -> Result<Vec<f64>, IoError> {
        let values = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("invalid number `{t}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn ints(&self, text: &str) -> Result<Vec<usize>, IoError> {
        text.split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| self.err(format!("invalid integer `{t}`"))))
            .collect()
    }

    fn int(&self, text: &str) -> Result<usize, IoError> {
        match self.ints(text)?.as_slice() {
            [v] => Ok(*v),
            _ => Err(self.err(format!("expected one integer, found `{text}`"))),
        }
    }
}

fn open(path: &Path) -> Result<Lines<BufReader<File>>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(Lines::new(BufReader::new(file), path))
}

pub fn read_matrix<R: BufRead>(reader: R, path: &Path) -> Result<DenseMatrix, IoError> {
    let mut lines = Lines::new(reader, path);
    lines.expect_magic(MATRIX_MAGIC)?;
    let dims = lines.expect_line("dimensions")?;
    let d = lines.ints(&dims)?;
    let [rows, cols] = d[..] else {
        return Err(lines.err("expected `rows cols`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let l = lines.expect_line("matrix row")?;
        data.extend(lines.reals(&l, cols)?);
    }
    lines.expect_end()?;
    Ok(DenseMatrix { rows, cols, data })
}

pub fn read_vector<R: BufRead>(reader: R, path: &Path) -> Result<Vec<f64>, IoError> {
    let mut lines = Lines::new(reader, path);
    lines.expect_magic(VECTOR_MAGIC)?;
    let header = lines.expect_line("length")?;
    let d = lines.ints(&header)?;
    // a column matrix header `n 1` is accepted as well
    let n = match d[..] {
        [n] | [n, 1] => n,
        _ => return Err(lines.err("expected vector length")),
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.expect_line("vector entry")?;
        out.extend(lines.reals(&l, 1)?);
    }
    lines.expect_end()?;
    Ok(out)
}

fn read_space_body<R: BufRead>(lines: &mut Lines<R>, prefix: &str) -> Result<Space, IoError> {
    let dims = lines.keyed(&format!("{prefix}dims"))?;
    let n = lines.int(&dims)?;
    let lb = lines.keyed(&format!("{prefix}lb"))?;
    let lb = lines.reals(&lb, n)?;
    let ub = lines.keyed(&format!("{prefix}ub"))?;
    let ub = lines.reals(&ub, n)?;
    let eta = lines.keyed(&format!("{prefix}eta"))?;
    let eta = lines.reals(&eta, n)?;
    Space::new(lb, ub, eta).map_err(|source| IoError::Grid {
        path: lines.path.clone(),
        source,
    })
}

pub fn read_space<R: BufRead>(reader: R, path: &Path) -> Result<Space, IoError> {
    let mut lines = Lines::new(reader, path);
    lines.expect_magic(SPACE_MAGIC)?;
    let s = read_space_body(&mut lines, "")?;
    lines.expect_end()?;
    Ok(s)
}

pub fn read_labels<R: BufRead>(reader: R, path: &Path) -> Result<LabeledStates, IoError> {
    let mut lines = Lines::new(reader, path);
    lines.expect_magic(LABELS_MAGIC)?;
    let total = lines.keyed("total")?;
    let total = lines.int(&total)?;
    let mut lists = Vec::new();
    for name in ["safe", "target", "avoid"] {
        let body = lines.keyed(name)?;
        let v = lines.ints(&body)?;
        let Some((&count, rest)) = v.split_first() else {
            return Err(lines.err(format!("`{name}` needs a count")));
        };
        if count != rest.len() {
            return Err(lines.err(format!("`{name}` declares {count} entries, found {}", rest.len())));
        }
        lists.push(rest.to_vec());
    }
    lines.expect_end()?;
    let avoid = lists.pop().unwrap_or_default();
    let target = lists.pop().unwrap_or_default();
    let safe = lists.pop().unwrap_or_default();
    LabeledStates::new(total, safe, target, avoid).map_err(|source| IoError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_controller<R: BufRead>(reader: R, path: &Path) -> Result<Controller, IoError> {
    let mut lines = Lines::new(reader, path);
    lines.expect_magic(CONTROLLER_MAGIC)?;
    let spec_text = lines.keyed("spec")?;
    let spec = SpecKind::from_name(&spec_text)
        .ok_or_else(|| lines.err(format!("unknown spec `{spec_text}`")))?;
    let mode_text = lines.keyed("mode")?;
    let mode = Mode::from_name(&mode_text)
        .ok_or_else(|| lines.err(format!("unknown mode `{mode_text}`")))?;
    let eps = lines.keyed("eps")?;
    let eps = lines.reals(&eps, 1)?[0];
    let horizon_text = lines.keyed("horizon")?;
    let horizon = if horizon_text == "infinite" {
        Horizon::Infinite
    } else {
        Horizon::Finite(lines.int(&horizon_text)?)
    };
    let iterations = lines.keyed("iterations")?;
    let iterations = lines.int(&iterations)?;
    let with_inputs = match lines.keyed("policy")?.as_str() {
        "input" => true,
        "none" => false,
        other => return Err(lines.err(format!("unknown policy kind `{other}`"))),
    };
    let state_space = read_space_body(&mut lines, "state_")?;
    let input_dims = lines.keyed("input_dims")?;
    let input_space = if lines.int(&input_dims)? == 0 {
        None
    } else {
        let n = lines.int(&input_dims)?;
        let lb = lines.keyed("input_lb")?;
        let lb = lines.reals(&lb, n)?;
        let ub = lines.keyed("input_ub")?;
        let ub = lines.reals(&ub, n)?;
        let eta = lines.keyed("input_eta")?;
        let eta = lines.reals(&eta, n)?;
        Some(Space::new(lb, ub, eta).map_err(|source| IoError::Grid {
            path: path.to_path_buf(),
            source,
        })?)
    };
    if with_inputs && input_space.is_none() {
        return Err(lines.err("policy `input` requires an input space"));
    }
    let rows = lines.keyed("rows")?;
    let rows = lines.int(&rows)?;
    let n_x = state_space.dims();
    let n_u = if with_inputs {
        input_space.as_ref().map_or(0, Space::dims)
    } else {
        0
    };
    let mut states = Vec::with_capacity(rows);
    let mut policy = Vec::with_capacity(if with_inputs { rows } else { 0 });
    let mut p_min = Vec::with_capacity(rows);
    let mut p_max = Vec::with_capacity(rows);
    for _ in 0..rows {
        let l = lines.expect_line("controller row")?;
        let (idx, rest) = l.split_once(char::is_whitespace).unwrap_or((l.as_str(), ""));
        let idx = lines.int(idx)?;
        if idx >= state_space.total() {
            return Err(lines.err(format!("state index {idx} out of range")));
        }
        let values = lines.reals(rest, n_x + n_u + 2)?;
        if let (true, Some(space)) = (with_inputs, &input_space) {
            let u = &values[n_x..n_x + n_u];
            let j = space
                .quantize(u)
                .map_err(|e| lines.err(format!("input {u:?}: {e}")))?;
            policy.push(j);
        }
        let (lo, hi) = (values[n_x + n_u], values[n_x + n_u + 1]);
        if !(lo <= hi) {
            return Err(lines.err(format!("p_min {lo} exceeds p_max {hi}")));
        }
        states.push(idx);
        p_min.push(lo);
        p_max.push(hi);
    }
    lines.expect_end()?;
    let c = Controller {
        spec,
        mode,
        eps,
        horizon,
        iterations,
        state_space,
        input_space,
        states,
        policy: with_inputs.then_some(policy),
        p_min,
        p_max,
    };
    if c.states.windows(2).any(|w| w[0] >= w[1]) {
        return Err(IoError::Controller {
            path: path.to_path_buf(),
            message: "state indices are not strictly increasing".into(),
        });
    }
    c.validate().map_err(|message| IoError::Controller {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(c)
}

pub fn load_matrix(path: &Path) -> Result<DenseMatrix, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_matrix(BufReader::new(file), path)
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_vector(BufReader::new(file), path)
}

pub fn load_space(path: &Path) -> Result<Space, IoError> {
    let mut lines = open(path)?;
    lines.expect_magic(SPACE_MAGIC)?;
    let s = read_space_body(&mut lines, "")?;
    lines.expect_end()?;
    Ok(s)
}

pub fn load_labels(path: &Path) -> Result<LabeledStates, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_labels(BufReader::new(file), path)
}

pub fn load_controller(path: &Path) -> Result<Controller, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_controller(BufReader::new(file), path)
}

fn load_optional_space(path: &Path) -> Result<Option<Space>, IoError> {
    if path.exists() {
        load_space(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads an abstraction directory written by [`save_imdp`], re-checking
/// shapes and row invariants.
pub fn load_imdp(dir: &Path) -> Result<Imdp, IoError> {
    let state_space = load_space(&dir.join(STATE_SPACE_FILE))?;
    let input_space = load_optional_space(&dir.join(INPUT_SPACE_FILE))?;
    let disturb_space = load_optional_space(&dir.join(DISTURB_SPACE_FILE))?;
    let labels = load_labels(&dir.join(LABELS_FILE))?;
    let t_min = load_matrix(&dir.join(MATRIX_FILES[0]))?;
    let t_max = load_matrix(&dir.join(MATRIX_FILES[1]))?;
    let mut vectors = VECTOR_FILES
        .iter()
        .map(|name| load_vector(&dir.join(name)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let mut next = || vectors.next().unwrap_or_default();
    let (r_min, r_max, a_min, a_max) = (next(), next(), next(), next());
    Imdp::new(
        state_space,
        input_space,
        disturb_space,
        labels,
        t_min,
        t_max,
        r_min,
        r_max,
        a_min,
        a_max,
    )
    .map_err(|source| IoError::Abstraction {
        path: dir.to_path_buf(),
        source,
    })
}
