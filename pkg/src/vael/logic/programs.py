"""Builders for the two-digit task programs over a configurable digit set.

Every builder emits the same two annotated-disjunction groups (one per image
position) so a model trained on one task can swap in any of the others.
"""


def _digit_groups(digits) -> str:
    lines = []
    for pos in (1, 2):
        choices = "; ".join(f"nn::digit(img,{pos},{d})" for d in digits)
        lines.append(choices + ".")
    return "\n".join(lines)


def _task_program(digits, head: str, op: str) -> str:
    digits = sorted(digits)
    return (
        f"% two handwritten digits over {{{', '.join(map(str, digits))}}}\n"
        f"{_digit_groups(digits)}\n"
        "\n"
        f"{head}(img,Z) :- digit(img,1,Y1), digit(img,2,Y2), Z is Y1 {op} Y2.\n"
        "\n"
        f"query({head}(img,Y)).\n"
    )


def addition_program(digits=range(10)) -> str:
    return _task_program(digits, "add", "+")


def multiplication_program(digits=range(10)) -> str:
    return _task_program(digits, "mult", "*")


def subtraction_program(digits=range(10)) -> str:
    return _task_program(digits, "sub", "-")


def power_program(digits=range(10)) -> str:
    return _task_program(digits, "pow", "^")


TASK_PROGRAMS = {
    "addition": addition_program,
    "multiplication": multiplication_program,
    "subtraction": subtraction_program,
    "power": power_program,
}
