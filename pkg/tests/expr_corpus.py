"""Expressions in x1, x2, y1, y2 shared by the parser and jet tests.

Every entry is smooth near POINT.
"""

POINT = (0.7, 1.3, 0.9, -0.4)

CORPUS = (
    "x1",
    "3.5",
    "x1 + x2 - y1",
    "x1*x2*y1*y2",
    "x1^3 - 2*x2^2 + y1",
    "(x1 + y2)^4",
    "x1^-2 + y1^-1",
    "pow(x2, 3) * y1",
    "pow(x1 + x2, -3)",
    "sqrt(y1^2 + y2^2)",
    "sqrt(y1^2 + y2^2) + 0.3*y1",
    "0.5*(y1^2 + y2^2)",
    "sqrt(y1^2 + x1^2*y2^2)",
    "sqrt(sqrt(y1^4 + y2^4))",
    "(y1^2 + y2^2)/x2^2",
    "sin(x1)*cos(x2)",
    "exp(x1*y1)",
    "log(x1 + x2)",
    "log(1 + y1^2)",
    "exp(-x1^2 - x2^2) * y2",
    "sin(x1*y1 + x2*y2)",
    "cos(sqrt(x1^2 + 1))",
    "x1/(1 + x2^2)",
    "-x1^2 + -y2",
    "(x1 - x2)*(y1 + y2)/(x1 + x2)",
    "sqrt(1 + x1^2)*sqrt(y1^2 + y2^2)",
    "exp(sin(x1)) - log(x2)",
    "2^3*x1 - 4/2*y1",
    "1/sqrt(x1*x2)",
    "((x1 + 1)*(x2 - 0.5))^2 / (y1^2 + 1)",
    "sin(x1)^2 + cos(x1)^2",
    "x2*exp(y1)*log(x1 + 2)",
)
