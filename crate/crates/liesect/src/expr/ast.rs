use std::fmt;

/// Byte range of a node in the source expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Which argument slot a variable refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// `g1..gn`: first argument of a product rule.
    G,
    /// `h1..hn`: second argument of a product rule.
    H,
    /// `x1..xn`: argument of a single-argument rule.
    X,
}

impl VarKind {
    pub fn prefix(self) -> char {
        match self {
            VarKind::G => 'g',
            VarKind::H => 'h',
            VarKind::X => 'x',
        }
    }
}

/// A variable reference; `index` is zero-based (`g1` has index 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub kind: VarKind,
    pub index: usize,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.index + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

/// The function vocabulary. Anything else is a parse error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Constant(f64),
    Var(Var),
    Unary {
        op: UnaryOp,
        operand: Box<ExprAst>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<ExprAst>,
        rhs: Box<ExprAst>,
    },
    Call {
        func: Func,
        arg: Box<ExprAst>,
    },
}

/// A parsed expression tree. Every node keeps the byte span it came from so
/// evaluation errors can point back into the source string.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    pub kind: ExprKind,
    pub span: Span,
}

impl ExprAst {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        ExprAst { kind, span }
    }

    /// Structural equality ignoring spans; constants compare bitwise.
    pub fn structurally_eq(&self, other: &ExprAst) -> bool {
        match (&self.kind, &other.kind) {
            (ExprKind::Constant(a), ExprKind::Constant(b)) => a.to_bits() == b.to_bits(),
            (ExprKind::Var(a), ExprKind::Var(b)) => a == b,
            (
                ExprKind::Unary { op: oa, operand: a },
                ExprKind::Unary { op: ob, operand: b },
            ) => oa == ob && a.structurally_eq(b),
            (
                ExprKind::Binary {
                    op: oa,
                    lhs: la,
                    rhs: ra,
                },
                ExprKind::Binary {
                    op: ob,
                    lhs: lb,
                    rhs: rb,
                },
            ) => oa == ob && la.structurally_eq(lb) && ra.structurally_eq(rb),
            (ExprKind::Call { func: fa, arg: a }, ExprKind::Call { func: fb, arg: b }) => {
                fa == fb && a.structurally_eq(b)
            }
            _ => false,
        }
    }

    /// Walk the tree and report every variable reference.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match &self.kind {
            ExprKind::Constant(_) => {}
            ExprKind::Var(v) => f(*v),
            ExprKind::Unary { operand, .. } => operand.visit_vars(f),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.visit_vars(f);
                rhs.visit_vars(f);
            }
            ExprKind::Call { arg, .. } => arg.visit_vars(f),
        }
    }

    /// Maximum zero-based variable index used for the given kind, if any.
    pub fn max_index(&self, kind: VarKind) -> Option<usize> {
        let mut max = None;
        self.visit_vars(&mut |v| {
            if v.kind == kind {
                max = Some(max.map_or(v.index, |m: usize| m.max(v.index)));
            }
        });
        max
    }
}

/// Fully parenthesized form; re-parsing it yields a structurally equal tree.
impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Constant(c) => write!(f, "{c}"),
            ExprKind::Var(v) => write!(f, "{v}"),
            ExprKind::Unary {
                op: UnaryOp::Neg,
                operand,
            } => write!(f, "(-{operand})"),
            ExprKind::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            ExprKind::Call { func, arg } => write!(f, "{}({arg})", func.name()),
        }
    }
}
