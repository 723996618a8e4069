"""A tiny calculator used as an extraction fixture."""

import math
from collections import deque as dq

# operator precedence table
PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isdigit():
            start = i
            while i < len(text) and text[i].isdigit():
                i += 1
            tokens.append(int(text[start:i]))
        else:
            tokens.append(ch)
            i += 1
    return tokens


def to_rpn(tokens):
    out = []
    ops = dq()
    for tok in tokens:
        if isinstance(tok, int):
            out.append(tok)
        else:
            while ops and PRECEDENCE[ops[-1]] >= PRECEDENCE[tok]:
                out.append(ops.pop())
            ops.append(tok)
    while ops:
        out.append(ops.pop())
    return out


class Calculator:
    """Evaluates infix expressions."""

    def __init__(self, strict=False):
        self.strict = strict
        self.history = []

    def apply(self, op, a, b):
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        try:
            return a / b
        except ZeroDivisionError:
            if self.strict:
                raise
            return math.inf

    def evaluate(self, text):
        stack = []
        for tok in to_rpn(tokenize(text)):
            if isinstance(tok, int):
                stack.append(tok)
            else:
                b = stack.pop()
                a = stack.pop()
                stack.append(self.apply(tok, a, b))
        result = stack[0] if stack else 0
        self.history.append(result)
        return result


class ScientificCalculator(Calculator):
    def root(self, x):
        return math.sqrt(x)


def main():
    calc = Calculator()
    print(calc.evaluate("1 + 2 * 3"))
