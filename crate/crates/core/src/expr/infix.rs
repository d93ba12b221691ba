//! Infix text form.
//!
//! ```text
//! (0.5 + (1.25*X * -2.0*Y))      weighted variables: coefficient*name, no spaces
//! aq(1.0*X, sin(Y))              unweighted variable: bare name
//! ```
//!
//! Every `+ * /` group is parenthesized and may hold two or three operands
//! joined by the same operator. Numbers use the shortest round-trip
//! representation, so `parse(format(t)) == t` exactly.

use super::{BinaryOp, ExprTree, Node, NodeKind, UnaryOp};
use crate::{Error, Result};

impl ExprTree {
    /// Renders the tree with the given column names.
    pub fn to_infix(&self, names: &[impl AsRef<str>]) -> String {
        let mut out = String::new();
        write_node(self, 0, names, &mut out);
        out
    }
}

fn var_name(names: &[impl AsRef<str>], index: usize) -> String {
    names
        .get(index)
        .map(|s| s.as_ref().to_string())
        .unwrap_or_else(|| format!("x{index}"))
}

fn write_node(t: &ExprTree, i: usize, names: &[impl AsRef<str>], out: &mut String) -> usize {
    let node = t.nodes()[i];
    match node.kind {
        NodeKind::Constant => {
            out.push_str(&format!("{:?}", node.value));
            i + 1
        }
        NodeKind::Variable { index } => {
            out.push_str(&format!("{:?}*{}", node.value, var_name(names, index)));
            i + 1
        }
        NodeKind::FixedVariable { index } => {
            out.push_str(&var_name(names, index));
            i + 1
        }
        NodeKind::Unary(op) => {
            out.push_str(op.name());
            out.push('(');
            let next = write_node(t, i + 1, names, out);
            out.push(')');
            next
        }
        NodeKind::Binary(BinaryOp::Aq) => {
            out.push_str("aq(");
            let mid = write_node(t, i + 1, names, out);
            out.push_str(", ");
            let next = write_node(t, mid, names, out);
            out.push(')');
            next
        }
        NodeKind::Binary(op) => {
            out.push('(');
            let mut next = i + 1;
            for c in 0..node.arity {
                if c > 0 {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
                next = write_node(t, next, names, out);
            }
            out.push(')');
            next
        }
    }
}

/// Parses the infix form produced by [`ExprTree::to_infix`].
pub fn parse(text: &str, names: &[impl AsRef<str>]) -> Result<ExprTree> {
    let names: Vec<&str> = names.iter().map(|s| s.as_ref()).collect();
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        names: &names,
    };
    let mut nodes = Vec::new();
    p.group(&mut nodes, None)?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    ExprTree::from_nodes(nodes)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    /// Operand list joined by one operator; `close` is the terminating byte
    /// (not consumed) or `None` at top level.
    fn group(&mut self, nodes: &mut Vec<Node>, close: Option<u8>) -> Result<()> {
        let head = nodes.len();
        nodes.push(Node::constant(0.0)); // placeholder for the operator
        self.term(nodes)?;
        let mut arity = 1;
        let mut op: Option<BinaryOp> = None;
        loop {
            self.skip_ws();
            let c = self.peek();
            if c == close {
                break;
            }
            let this = match c {
                Some(b'+') => BinaryOp::Add,
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Err(self.error("expected operator")),
            };
            if op.is_some_and(|o| o != this) {
                return Err(self.error("mixed operators in one group; add parentheses"));
            }
            op = Some(this);
            self.pos += 1;
            self.term(nodes)?;
            arity += 1;
        }
        match op {
            Some(op) => nodes[head] = Node::function(op, arity),
            None => {
                nodes.remove(head);
            }
        }
        Ok(())
    }

    fn term(&mut self, nodes: &mut Vec<Node>) -> Result<()> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.group(nodes, Some(b')'))?;
                self.expect(b')')
            }
            Some(c) if c == b'-' || c == b'.' || c.is_ascii_digit() => {
                let value = self.number()?;
                // coefficient*name with no whitespace is a weighted variable
                if self.peek() == Some(b'*') {
                    let save = self.pos;
                    self.pos += 1;
                    if let Some(name) = self.ident() {
                        if self.peek() != Some(b'(') {
                            if let Some(index) = self.lookup(name) {
                                nodes.push(Node::variable(index, value));
                                return Ok(());
                            }
                        }
                    }
                    self.pos = save;
                }
                nodes.push(Node::constant(value));
                Ok(())
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                let name = self.ident().unwrap();
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    if name == "aq" {
                        nodes.push(Node::function(BinaryOp::Aq, 2));
                        self.group(nodes, Some(b','))?;
                        self.expect(b',')?;
                        self.group(nodes, Some(b')'))?;
                    } else {
                        let op = UnaryOp::ALL
                            .into_iter()
                            .find(|u| u.name() == name)
                            .ok_or_else(|| Error::Parse {
                                offset: start,
                                message: format!("unknown function '{name}'"),
                            })?;
                        nodes.push(Node::unary(op));
                        self.group(nodes, Some(b')'))?;
                    }
                    self.expect(b')')
                } else {
                    let index = self.lookup(name).ok_or_else(|| Error::Parse {
                        offset: start,
                        message: format!("unknown variable '{name}'"),
                    })?;
                    nodes.push(Node::fixed_variable(index));
                    Ok(())
                }
            }
            _ => Err(self.error("expected operand")),
        }
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| *n == name)
    }

    fn ident(&mut self) -> Option<&'a str> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start || self.src[start].is_ascii_digit() {
            self.pos = start;
            return None;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        if bytes.get(i) == Some(&b'-') {
            i += 1;
        }
        if bytes[i..].starts_with(b"inf") {
            i += 3;
        } else {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap();
        let v = text.parse::<f64>().map_err(|_| Error::Parse {
            offset: start,
            message: format!("bad number '{text}'"),
        })?;
        self.pos = i;
        Ok(v)
    }
}
