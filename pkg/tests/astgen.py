"""Seeded generator of well-typed random expression trees (scalar result)."""

import numpy as np

from benchforge.exprlang import (
    Binary,
    Compare,
    Const,
    Coord,
    Index,
    Let,
    Named,
    Reduce,
    Ref,
    Roll,
    Slice,
    Unary,
    Where,
)

UNARY = ("sin", "cos", "tan", "tanh", "exp", "log", "abs", "sqrt", "sign", "floor", "neg")
BINARY = ("+", "-", "*", "/", "^", "min2", "max2")
REDUCE = ("sum", "mean", "prod", "max", "min")
CMP = ("<", "<=", ">", ">=", "==", "!=")


class TreeGen:
    def __init__(self, seed: int, dim: int = 4):
        self.rng = np.random.default_rng(seed)
        self.d = dim
        self.names = 0

    def pick(self, options):
        return options[self.rng.integers(len(options))]

    def const(self):
        kind = self.rng.integers(4)
        if kind == 0:
            return Const(float(self.rng.integers(0, 10)))
        if kind == 1:
            return Const(float(self.rng.uniform(0, 5)))
        if kind == 2:
            return Const(float(10.0 ** self.rng.integers(-8, 9)))
        return Named(self.pick(("pi", "e")))

    def scalar(self, depth, scope):
        leaves = ["const", "index"] + (["ref"] if scope["s"] else [])
        inner = ["reduce", "unary", "binary", "let", "where"]
        kind = self.pick(leaves if depth <= 0 else leaves + inner * 2)
        if kind == "const":
            return self.const()
        if kind == "index":
            return Index(int(self.rng.integers(-self.d, self.d)))
        if kind == "ref":
            return Ref(self.pick(scope["s"]))
        if kind == "reduce":
            return Reduce(self.pick(REDUCE), self.vector(depth - 1, scope))
        if kind == "unary":
            return Unary(self.pick(UNARY), self.scalar(depth - 1, scope))
        if kind == "binary":
            return Binary(self.pick(BINARY), self.scalar(depth - 1, scope), self.scalar(depth - 1, scope))
        if kind == "where":
            cond = Compare(self.pick(CMP), self.scalar(depth - 1, scope), self.scalar(depth - 1, scope))
            return Where(cond, self.scalar(depth - 1, scope), self.scalar(depth - 1, scope))
        return self.let(depth, scope, self.scalar)

    def vector(self, depth, scope):
        leaves = ["coord", "slice"] + (["ref"] if scope["v"] else [])
        inner = ["unary", "binary", "mixed", "roll", "where", "let"]
        kind = self.pick(leaves if depth <= 0 else leaves + inner * 2)
        if kind == "coord":
            return Coord()
        if kind == "slice":
            return self.pick((Slice(None, None), Slice(0, None), Slice(None, self.d), Slice(-self.d, None)))
        if kind == "ref":
            return Ref(self.pick(scope["v"]))
        if kind == "unary":
            return Unary(self.pick(UNARY), self.vector(depth - 1, scope))
        if kind == "binary":
            return Binary(self.pick(BINARY), self.vector(depth - 1, scope), self.vector(depth - 1, scope))
        if kind == "mixed":
            parts = [self.vector(depth - 1, scope), self.scalar(depth - 1, scope)]
            if self.rng.random() < 0.5:
                parts.reverse()
            return Binary(self.pick(BINARY), *parts)
        if kind == "roll":
            return Roll(self.vector(depth - 1, scope), int(self.rng.integers(-3, 4)))
        if kind == "where":
            cond = Compare(self.pick(CMP), self.vector(depth - 1, scope), self.scalar(depth - 1, scope))
            return Where(cond, self.vector(depth - 1, scope), self.vector(depth - 1, scope))
        return self.let(depth, scope, self.vector)

    def let(self, depth, scope, body_kind):
        name = f"t{self.names}"
        self.names += 1
        if self.rng.random() < 0.5:
            value, slot = self.scalar(depth - 1, scope), "s"
        else:
            value, slot = self.vector(depth - 1, scope), "v"
        inner = {"s": list(scope["s"]), "v": list(scope["v"])}
        inner[slot].append(name)
        return Let(name, value, body_kind(depth - 1, inner))

    def program(self, depth=4):
        return self.scalar(depth, {"s": [], "v": []})


def corpus(n: int = 500, seed: int = 2024, dim: int = 4):
    gen = TreeGen(seed, dim)
    return [gen.program(int(gen.rng.integers(1, 6))) for _ in range(n)]
