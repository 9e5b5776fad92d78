//! Natural interval extension of expressions, used to enclose the image of a
//! source cell under the dynamics. Results are widened by a few ulps so that
//! floating-point rounding never makes an enclosure too tight. Anything the
//! extension cannot bound (poles, domain violations) becomes the whole line.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{BinOp, Expr, Func, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

const WIDEN: f64 = 4.0 * f64::EPSILON;

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn entire() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn widened(self) -> Self {
        if self.lo.is_nan() || self.hi.is_nan() {
            return Self::entire();
        }
        Self {
            lo: self.lo - WIDEN * self.lo.abs() - f64::MIN_POSITIVE,
            hi: self.hi + WIDEN * self.hi.abs() + f64::MIN_POSITIVE,
        }
    }

    fn hull(values: &[f64]) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { lo, hi }
    }

    fn add(self, o: Self) -> Self {
        Self::new(self.lo + o.lo, self.hi + o.hi).widened()
    }

    fn sub(self, o: Self) -> Self {
        Self::new(self.lo - o.hi, self.hi - o.lo).widened()
    }

    fn mul(self, o: Self) -> Self {
        let p = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        if p.iter().any(|v| v.is_nan()) {
            return Self::entire();
        }
        Self::hull(&p).widened()
    }

    fn div(self, o: Self) -> Self {
        if o.contains(0.0) {
            return Self::entire();
        }
        self.mul(Self::new(1.0 / o.hi, 1.0 / o.lo).widened())
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::point(1.0);
        }
        if n < 0 {
            return Self::point(1.0).div(self.powi(-n));
        }
        let a = self.lo.powi(n);
        let b = self.hi.powi(n);
        if n % 2 == 1 || self.lo >= 0.0 {
            Self::hull(&[a, b]).widened()
        } else if self.hi <= 0.0 {
            Self::new(b, a).widened()
        } else {
            Self::new(0.0, a.max(b)).widened()
        }
    }

    fn pow(self, e: Self) -> Self {
        if e.lo == e.hi && e.lo.fract() == 0.0 && e.lo.abs() <= i32::MAX as f64 {
            return self.powi(e.lo as i32);
        }
        if self.lo > 0.0 {
            // x^e = exp(e * ln x), monotone pieces
            let ln = Self::new(self.lo.ln(), self.hi.ln()).widened();
            return monotone(ln.mul(e), f64::exp);
        }
        Self::entire()
    }

    fn sin(self) -> Self {
        // maxima of sin at pi/2 + 2k*pi, minima at pi/2 + (2k+1)*pi
        self.periodic(f64::sin, FRAC_PI_2)
    }

    fn cos(self) -> Self {
        self.periodic(f64::cos, 0.0)
    }

    /// Range of a sine-like `f` whose maxima sit at `peak + 2k*pi` and minima
    /// at `peak + (2k+1)*pi`. Endpoints are evaluated with `f` itself so point
    /// intervals stay tight around the true value.
    fn periodic(self, f: fn(f64) -> f64, peak: f64) -> Self {
        if !(self.hi - self.lo < 2.0 * PI) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Self::new(-1.0, 1.0);
        }
        let mut vals = vec![f(self.lo), f(self.hi)];
        let k0 = ((self.lo - peak) / PI).ceil() as i64;
        let k1 = ((self.hi - peak) / PI).floor() as i64;
        for k in k0..=k1 {
            vals.push(if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 });
        }
        let r = Self::hull(&vals).widened();
        Self::new(r.lo.max(-1.0), r.hi.min(1.0))
    }

    fn tan(self) -> Self {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Self::entire();
        }
        // a pole at pi/2 + k*pi inside the interval makes the range unbounded
        let k = ((self.lo - FRAC_PI_2) / PI).ceil();
        if FRAC_PI_2 + k * PI <= self.hi {
            return Self::entire();
        }
        monotone(self, f64::tan)
    }
}

fn monotone(x: Interval, f: impl Fn(f64) -> f64) -> Interval {
    Interval::hull(&[f(x.lo), f(x.hi)]).widened()
}

fn antitone(x: Interval, f: impl Fn(f64) -> f64) -> Interval {
    Interval::hull(&[f(x.hi), f(x.lo)]).widened()
}

impl Expr {
    /// Encloses the expression's range when state variables range over `x`.
    pub fn eval_interval(&self, x: &[Interval], u: &[Interval], w: &[Interval]) -> Interval {
        match self {
            Expr::Num(v) => Interval::point(*v),
            Expr::Var(v) => match *v {
                Var::State(i) => x[i],
                Var::Input(i) => u[i],
                Var::Disturb(i) => w[i],
                Var::Point(_) | Var::Mean(_) => Interval::entire(),
            },
            Expr::Neg(e) => {
                let a = e.eval_interval(x, u, w);
                Interval::new(-a.hi, -a.lo)
            }
            Expr::Bin(op, a, b) => {
                let a = a.eval_interval(x, u, w);
                let b = b.eval_interval(x, u, w);
                match op {
                    BinOp::Add => a.add(b),
                    BinOp::Sub => a.sub(b),
                    BinOp::Mul => a.mul(b),
                    BinOp::Div => a.div(b),
                    BinOp::Pow => a.pow(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval_interval(x, u, w);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Atan => monotone(a, f64::atan),
                    Func::Asin => {
                        if a.lo < -1.0 || a.hi > 1.0 {
                            Interval::entire()
                        } else {
                            monotone(a, f64::asin)
                        }
                    }
                    Func::Acos => {
                        if a.lo < -1.0 || a.hi > 1.0 {
                            Interval::entire()
                        } else {
                            antitone(a, f64::acos)
                        }
                    }
                    Func::Sqrt => {
                        if a.lo < 0.0 {
                            Interval::entire()
                        } else {
                            monotone(a, f64::sqrt)
                        }
                    }
                    Func::Exp => monotone(a, f64::exp),
                    Func::Log => {
                        if a.lo <= 0.0 {
                            Interval::entire()
                        } else {
                            monotone(a, f64::ln)
                        }
                    }
                    Func::Abs => {
                        if a.lo >= 0.0 {
                            a
                        } else if a.hi <= 0.0 {
                            Interval::new(-a.hi, -a.lo)
                        } else {
                            Interval::new(0.0, a.hi.max(-a.lo))
                        }
                    }
                    Func::Min => {
                        let b = args[1].eval_interval(x, u, w);
                        Interval::new(a.lo.min(b.lo), a.hi.min(b.hi))
                    }
                    Func::Max => {
                        let b = args[1].eval_interval(x, u, w);
                        Interval::new(a.lo.max(b.lo), a.hi.max(b.hi))
                    }
                }
            }
        }
    }
}
