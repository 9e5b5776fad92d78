//! The expression language against an independent evaluator: random trees
//! are rendered to text, parsed and evaluated, and compared with direct
//! evaluation of the tree; interval enclosures must contain every sampled
//! point value.

use impact::expr::{parse_expression, parse_predicate, Dims, Env, Interval};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum T {
    Num(f64),
    X(usize),
    U(usize),
    Neg(Box<T>),
    Add(Box<T>, Box<T>),
    Sub(Box<T>, Box<T>),
    Mul(Box<T>, Box<T>),
    Div(Box<T>, Box<T>),
    Sq(Box<T>),
    Call(&'static str, Box<T>),
    Min(Box<T>, Box<T>),
}

impl T {
    fn text(&self) -> String {
        match self {
            T::Num(v) => format!("{v:?}"),
            T::X(i) => format!("x{}", i + 1),
            T::U(i) => format!("u{}", i + 1),
            T::Neg(a) => format!("-({})", a.text()),
            T::Add(a, b) => format!("({}) + ({})", a.text(), b.text()),
            T::Sub(a, b) => format!("({})-({})", a.text(), b.text()),
            T::Mul(a, b) => format!("({}) *({})", a.text(), b.text()),
            T::Div(a, b) => format!("({}) / ({})", a.text(), b.text()),
            T::Sq(a) => format!("({})^2", a.text()),
            T::Call(f, a) => format!("{f}({})", a.text()),
            T::Min(a, b) => format!("min({}, {})", a.text(), b.text()),
        }
    }

    fn eval(&self, x: &[f64], u: &[f64]) -> Option<f64> {
        Some(match self {
            T::Num(v) => *v,
            T::X(i) => x[*i],
            T::U(i) => u[*i],
            T::Neg(a) => -a.eval(x, u)?,
            T::Add(a, b) => a.eval(x, u)? + b.eval(x, u)?,
            T::Sub(a, b) => a.eval(x, u)? - b.eval(x, u)?,
            T::Mul(a, b) => a.eval(x, u)? * b.eval(x, u)?,
            T::Div(a, b) => {
                let d = b.eval(x, u)?;
                if d == 0.0 {
                    return None;
                }
                a.eval(x, u)? / d
            }
            T::Sq(a) => a.eval(x, u)?.powf(2.0),
            T::Call(f, a) => {
                let v = a.eval(x, u)?;
                match *f {
                    "sin" => v.sin(),
                    "cos" => v.cos(),
                    "exp" => v.exp(),
                    "atan" => v.atan(),
                    "abs" => v.abs(),
                    "sqrt" if v >= 0.0 => v.sqrt(),
                    "log" if v > 0.0 => v.ln(),
                    _ => return None,
                }
            }
            T::Min(a, b) => a.eval(x, u)?.min(b.eval(x, u)?),
        })
    }
}

fn arb_tree() -> impl Strategy<Value = T> {
    let leaf = prop_oneof![
        (-5.0f64..5.0).prop_map(T::Num),
        (0usize..3).prop_map(T::X),
        (0usize..2).prop_map(T::U),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let b = |f: fn(Box<T>, Box<T>) -> T| (inner.clone(), inner.clone()).prop_map(move |(a, b)| f(Box::new(a), Box::new(b)));
        prop_oneof![
            inner.clone().prop_map(|a| T::Neg(Box::new(a))),
            b(T::Add),
            b(T::Sub),
            b(T::Mul),
            b(T::Div),
            b(T::Min),
            inner.clone().prop_map(|a| T::Sq(Box::new(a))),
            (
                prop_oneof![
                    Just("sin"),
                    Just("cos"),
                    Just("exp"),
                    Just("atan"),
                    Just("abs"),
                    Just("sqrt"),
                    Just("log")
                ],
                inner
            )
                .prop_map(|(f, a)| T::Call(f, Box::new(a))),
        ]
    })
}

fn dims() -> Dims {
    Dims::new(3, 2, 0)
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn parsed_text_evaluates_like_the_tree(
        t in arb_tree(),
        x in prop::array::uniform3(-3.0f64..3.0),
        u in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let e = parse_expression(&t.text(), dims()).unwrap();
        let got = e.eval(&Env::new(&x, &u, &[]));
        match t.eval(&x, &u) {
            Some(want) if want.is_finite() => {
                let got = got.unwrap();
                prop_assert!(close(got, want), "{}: {} vs {}", t.text(), got, want);
            }
            // domain errors in the oracle must surface as errors (or a
            // non-finite value) in the evaluator
            None => prop_assert!(got.is_err() || !got.unwrap().is_finite()),
            Some(_) => {}
        }
    }

    #[test]
    fn interval_enclosure_contains_samples(
        t in arb_tree(),
        center in prop::array::uniform3(-2.0f64..2.0),
        width in prop::array::uniform3(0.0f64..0.5),
        u in prop::array::uniform2(-1.0f64..1.0),
        samples in prop::collection::vec(prop::array::uniform3(0.0f64..=1.0), 16),
    ) {
        let f = parse_expression(&t.text(), dims()).unwrap();
        let boxed: Vec<Interval> = (0..3).map(|d| Interval::new(center[d] - width[d], center[d] + width[d])).collect();
        let inputs: Vec<Interval> = u.iter().map(|&v| Interval::point(v)).collect();
        let enclosure = f.eval_interval(&boxed, &inputs, &[]);
        for s in &samples {
            let x: Vec<f64> = (0..3).map(|d| center[d] - width[d] + 2.0 * width[d] * s[d]).collect();
            if let Ok(v) = f.eval(&Env::new(&x, &u, &[])) {
                if v.is_finite() {
                    prop_assert!(enclosure.contains(v), "{} at {:?}: {} not in {:?}", t.text(), x, v, enclosure);
                }
            }
        }
    }
}

#[test]
fn precedence_and_associativity() {
    let cases = [
        ("1 - 2 - 3", -4.0),
        ("8 / 4 / 2", 1.0),
        ("2 * 3 + 4 * 5", 26.0),
        ("2 ^ 3 ^ 2", 512.0),
        ("-2 ^ 2", -4.0),
        ("2 ^ -1", 0.5),
        ("(1 + 2) * 3", 9.0),
        ("1e-3 * 1E3", 1.0),
        ("max(1, min(4, 3)) - abs(-2)", 1.0),
        ("--3", 3.0),
        ("2*pi - 2*pi", 0.0),
    ];
    for (text, want) in cases {
        let e = parse_expression(text, Dims::new(0, 0, 0)).unwrap();
        assert_eq!(e.eval(&Env::default()).unwrap(), want, "{text}");
    }
}

#[test]
fn predicates_match_direct_comparisons() {
    let p = parse_predicate("x1 >= 5 && x1 <= 7 && !(x2 < 5 || x2 > 7)", 2).unwrap();
    for i in 0..=40 {
        for j in 0..=40 {
            let (a, b) = (i as f64 * 0.25, j as f64 * 0.25);
            let want = (5.0..=7.0).contains(&a) && (5.0..=7.0).contains(&b);
            assert_eq!(p.eval_state(&[a, b]).unwrap(), want, "({a}, {b})");
        }
    }
}
