"""Readable equations from trained models, with terms ranked by contribution.

A term's contribution is the mean over samples of ``|coefficient * value|``;
the printed equation keeps the strongest few.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import NotTrained, ParseError
from .hybrid import HybridPde
from .pblock import TIME, Factor, PBlock, TermSpec
from .series import TimeSeries, resample

UNICODE, ASCII, LATEX = "unicode", "ascii", "latex"
_SEP = {UNICODE: "·", ASCII: "*", LATEX: " "}
_SUP = {1: "", 2: "²", 3: "³"}


def rank_terms(terms):
    """``terms`` is a list of ``(coefficient, values)``.

    Returns ``[(position, contribution), ...]`` sorted by descending
    contribution, ties kept in input order, zero coefficients dropped.
    """
    scored = []
    for pos, (coef, values) in enumerate(terms):
        if coef == 0:
            continue
        scored.append((pos, float(np.mean(np.abs(coef * np.asarray(values, dtype=float))))))
    return sorted(scored, key=lambda pc: -pc[1])


def _name(names, ch, style):
    n = "t" if ch == TIME else names[ch]
    if style == LATEX:
        m = re.fullmatch(r"([A-Za-z]+)(\d+)", n)
        if m:
            return f"{m.group(1)}_{m.group(2)}"
    return n


def lhs_symbol(order: int, style: str = UNICODE, target: str = "y") -> str:
    if style == ASCII:
        return f"d{target}/dt" if order == 1 else f"d{order}{target}/dt{order}"
    if style == LATEX:
        p = r"\partial" if order == 1 else rf"\partial^{order}"
        q = r"\partial t" if order == 1 else rf"\partial t^{order}"
        return rf"\frac{{{p} {target}}}{{{q}}}"
    return f"∂{_SUP[order]}{target}/∂t{_SUP[order]}"


def factor_symbol(f: Factor, names, style: str = UNICODE) -> str:
    if not f.is_ratio:
        return _name(names, f.num, style)
    num, den, d = _name(names, f.num, style), _name(names, f.den, style), f.order
    if style == ASCII:
        return f"d{num}/d{den}" if d == 1 else f"d{d}{num}/d{den}^{d}"
    if style == LATEX:
        if d == 1:
            return rf"\frac{{\partial {num}}}{{\partial {den}}}"
        return rf"\frac{{\partial^{d} {num}}}{{\partial {den}^{d}}}"
    return f"∂{_SUP.get(d, str(d))}{num}/∂{den}{_SUP.get(d, str(d))}"


def term_symbol(term: TermSpec, names, style: str = UNICODE) -> str:
    parts = [factor_symbol(f, names, style) for f in term.factors]
    if term.timed:
        parts.append("t")
    if len(parts) > 1:
        wrap = ("\\left(", "\\right)") if style == LATEX else ("(", ")")
        parts = [wrap[0] + p + wrap[1] if f.is_ratio else p for p, f in zip(parts, term.factors)] + parts[len(term.factors):]
    joiner = {UNICODE: "·", ASCII: "*", LATEX: r" \cdot "}[style]
    return joiner.join(parts)


@dataclass
class EquationDoc:
    lhs: str
    terms: list = field(default_factory=list)  # (coefficient, symbol, contribution)
    bias: float = 0.0
    truncation: int = 4
    eps: float | None = None

    def shown(self):
        return self.terms[: self.truncation]

    def to_dict(self):
        return {
            "lhs": self.lhs,
            "terms": [{"coefficient": c, "symbol": s, "contribution": m} for c, s, m in self.terms],
            "bias": self.bias,
            "truncation": self.truncation,
            "eps": self.eps,
        }


def _fmt(c, precision):
    return f"{abs(c):.{precision}f}"


def format_equation(doc: EquationDoc, precision: int = 2, style: str = UNICODE) -> str:
    sep = _SEP[style]
    pieces = []
    for c, sym, _ in doc.shown():
        pieces.append(("-" if c < 0 else "+", f"{_fmt(c, precision)}{sep}{sym}"))
    if round(doc.bias, precision) != 0 or not pieces:
        pieces.append(("-" if doc.bias < 0 else "+", _fmt(doc.bias, precision)))
    sign, body = pieces[0]
    rhs = ("-" if sign == "-" else "") + body
    for sign, body in pieces[1:]:
        rhs += f" {sign} {body}"
    out = f"{doc.lhs} = {rhs}"
    if doc.eps is not None:
        tag = r"\epsilon" if style == LATEX else ("eps" if style == ASCII else "ε")
        out += f"   [{tag}={doc.eps:.{precision}f}]"
    return out


def equation_doc(model, series: TimeSeries, style: str = UNICODE, truncation: int = 4) -> EquationDoc:
    """Ranked terms of a block, or of a hybrid's most weighted component.

    ``series`` supplies the term values used for ranking (the validation
    split is a good choice).
    """
    eps = None
    if isinstance(model, HybridPde):
        i = model.dominant()
        eps = float(model.weights[i])
        plan = model.plans[i]
        model, series = model.components[i], resample(series, plan.clipped(series.m))
    if not isinstance(model, PBlock) or not model.trained:
        raise NotTrained("render needs a trained model")
    X, _ = model.features(series)
    ranked = rank_terms([(w, X[:, c]) for c, w in enumerate(model.weights)])
    terms = [(float(model.weights[c]), term_symbol(model.terms[c], model.names, style), m) for c, m in ranked]
    return EquationDoc(lhs_symbol(model.lhs_order, style, model.names[0]), terms, float(model.bias), truncation, eps)


def render_equation(model, series: TimeSeries, precision: int = 2, style: str = UNICODE) -> str:
    return format_equation(equation_doc(model, series, style), precision, style)


_NUM = r"\d+(?:\.\d*)?"


def parse_equation(text: str):
    """Inverse of :func:`format_equation`: returns ``(lhs, [(coef, symbol)], bias)``."""
    text = re.sub(r"\s+\[[^\]]*\]\s*$", "", text.strip())
    if " = " not in text:
        raise ParseError(f"no ' = ' in {text!r}")
    lhs, rhs = text.split(" = ", 1)
    rhs = rhs.strip()
    sign = 1.0
    if rhs.startswith("-"):
        sign, rhs = -1.0, rhs[1:]
    chunks = re.split(r" ([+-]) ", rhs)
    items = [(sign, chunks[0])] + [(1.0 if s == "+" else -1.0, c) for s, c in zip(chunks[1::2], chunks[2::2])]
    terms, bias = [], 0.0
    for s, chunk in items:
        m = re.fullmatch(rf"({_NUM})(?:·|\*| )(.+)", chunk)
        if m:
            terms.append((s * float(m.group(1)), m.group(2)))
        elif re.fullmatch(_NUM, chunk):
            bias += s * float(chunk)
        else:
            raise ParseError(f"cannot read term {chunk!r}")
    return lhs, terms, bias


def _channel(token, names):
    if token == "t":
        return TIME
    if token not in names:
        raise ParseError(f"unknown channel {token!r}; have {names}")
    return names.index(token)


def parse_term(text: str, names) -> TermSpec:
    """Read an ASCII term such as ``d2y/dx1^2``, ``dx1/dt``, ``y`` or ``dy/dx1*x1*t``."""
    names = list(names)
    factors, timed = [], False
    for raw in text.replace(" ", "").split("*"):
        tok = raw.strip("()")
        m = re.fullmatch(r"d(\d?)(\w+?)/d(\w+?)(?:\^(\d))?", tok)
        if m and (m.group(1) or m.group(2) in names) and m.group(3) in names + ["t"]:
            order = int(m.group(1) or 1)
            if m.group(4) and int(m.group(4)) != order:
                raise ParseError(f"mismatched derivative orders in {tok!r}")
            try:
                factors.append(Factor.ratio(_channel(m.group(2), names), _channel(m.group(3), names), order))
            except ValueError as exc:
                raise ParseError(f"{tok!r}: {exc}") from exc
        elif tok == "t":
            if timed:
                raise ParseError(f"time gate repeated in {text!r}")
            timed = True
        elif tok:
            factors.append(Factor.raw(_channel(tok, names)))
        else:
            raise ParseError(f"empty factor in {text!r}")
    try:
        return TermSpec(tuple(factors), timed)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
