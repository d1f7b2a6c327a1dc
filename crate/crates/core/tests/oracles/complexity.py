"""McCabe complexity of the single function in each source, from Python's
own ast module.

Input: [source]; output: [int]. Counts if/elif, loops, except clauses,
match cases, boolean connectives, conditional expressions and
comprehension filters; nested definitions and lambdas are not entered.
"""
import ast
import json
import sys

NESTED = (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef, ast.Lambda)
BRANCHES = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.ExceptHandler, ast.IfExp, ast.match_case)


def count(node):
    if isinstance(node, NESTED):
        return 0
    own = 0
    if isinstance(node, BRANCHES):
        own = 1
    elif isinstance(node, ast.BoolOp):
        own = len(node.values) - 1
    elif isinstance(node, ast.comprehension):
        own = len(node.ifs)
    return own + sum(count(c) for c in ast.iter_child_nodes(node))


def complexity(source):
    fn = ast.parse(source).body[0]
    return 1 + sum(count(stmt) for stmt in fn.body)


def main():
    sources = json.load(sys.stdin)
    json.dump([complexity(s) for s in sources], sys.stdout)


if __name__ == '__main__':
    main()
