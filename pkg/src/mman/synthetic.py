"""Templated mini-C corpus with one distinct description per function."""

from __future__ import annotations

from .dataset import CodeRecord

OBJECTS = [
    # (description noun phrase, identifier, element type, length name)
    ("integer array", "values", "int", "n"),
    ("score list", "scores", "long", "count"),
    ("price table", "prices", "unsigned", "size"),
    ("sensor buffer", "samples", "short", "len"),
    ("pixel row", "pixels", "unsigned char", "width"),
    ("grade sheet", "grades", "signed char", "num"),
    ("weight vector", "weights", "long long", "dim"),
    ("counter bank", "counters", "unsigned long", "slots"),
]

OPERATIONS = {
    "sum": (
        "compute the sum of the {noun}",
        """{t} sum_{v}({t} *{v}, int {n})
{{
    {t} total = 0;
    int i;
    for (i = 0; i < {n}; i++) {{
        total += {v}[i];
    }}
    return total;
}}""",
    ),
    "max": (
        "find the largest value in the {noun}",
        """{t} max_{v}({t} *{v}, int {n})
{{
    {t} best = {v}[0];
    int i = 1;
    while (i < {n}) {{
        if ({v}[i] > best) {{
            best = {v}[i];
        }}
        i++;
    }}
    return best;
}}""",
    ),
    "count_even": (
        "count how many even numbers the {noun} holds",
        """int count_even_{v}({t} *{v}, int {n})
{{
    int count = 0;
    int i;
    for (i = 0; i < {n}; i++) {{
        if ({v}[i] % 2 == 0) {{
            count++;
        }}
    }}
    return count;
}}""",
    ),
    "reverse": (
        "reverse the order of the {noun} in place",
        """void reverse_{v}({t} *{v}, int {n})
{{
    int lo = 0;
    int hi = {n} - 1;
    while (lo < hi) {{
        {t} tmp = {v}[lo];
        {v}[lo] = {v}[hi];
        {v}[hi] = tmp;
        lo++;
        hi--;
    }}
}}""",
    ),
    "clear": (
        "reset every entry of the {noun} to zero",
        """void clear_{v}({t} *{v}, int {n})
{{
    int i;
    for (i = 0; i < {n}; i++) {{
        {v}[i] = 0;
    }}
}}""",
    ),
    "contains": (
        "check whether the {noun} contains a given key",
        """int contains_{v}({t} *{v}, int {n}, int key)
{{
    int i = 0;
    while (i < {n}) {{
        if ({v}[i] == key) {{
            return 1;
        }}
        i++;
    }}
    return 0;
}}""",
    ),
    "average": (
        "return the mean of the {noun}",
        """double average_{v}({t} *{v}, int {n})
{{
    double acc = 0.0;
    int i;
    if ({n} == 0) {{
        return 0.0;
    }}
    for (i = 0; i < {n}; i++) {{
        acc = acc + {v}[i];
    }}
    return acc / {n};
}}""",
    ),
    "scale": (
        "multiply each element of the {noun} by a factor",
        """void scale_{v}({t} *{v}, int {n}, int factor)
{{
    int i;
    for (i = 0; i < {n}; i++) {{
        {v}[i] = {v}[i] * factor;
    }}
    print_status({n});
}}""",
    ),
    "min": (
        "find the smallest value in the {noun}",
        """{t} min_{v}({t} *{v}, int {n})
{{
    {t} low = {v}[0];
    int i;
    for (i = 1; i < {n}; i++) {{
        if ({v}[i] < low) {{
            low = {v}[i];
        }}
    }}
    return low;
}}""",
    ),
    "product": (
        "multiply together all entries of the {noun}",
        """long product_{v}({t} *{v}, int {n})
{{
    long prod = 1;
    int i = 0;
    while (i < {n}) {{
        prod = prod * {v}[i];
        i = i + 1;
    }}
    return prod;
}}""",
    ),
    "index_of": (
        "return the position of a key inside the {noun} or minus one",
        """int index_of_{v}({t} *{v}, int {n}, {t} key)
{{
    int pos;
    for (pos = 0; pos < {n}; pos++) {{
        if ({v}[pos] == key) {{
            return pos;
        }}
    }}
    return -1;
}}""",
    ),
    "fill": (
        "set every slot of the {noun} to the same value",
        """void fill_{v}({t} *{v}, int {n}, {t} value)
{{
    int k = 0;
    while (k < {n}) {{
        {v}[k] = value;
        k++;
    }}
}}""",
    ),
    "is_sorted": (
        "test if the {noun} is sorted in ascending order",
        """int is_sorted_{v}({t} *{v}, int {n})
{{
    int i;
    for (i = 1; i < {n}; i++) {{
        if ({v}[i - 1] > {v}[i]) {{
            return 0;
        }}
    }}
    return 1;
}}""",
    ),
    "count_positive": (
        "count the strictly positive items of the {noun}",
        """int count_positive_{v}({t} *{v}, int {n})
{{
    int hits = 0;
    int i;
    for (i = 0; i < {n}; i++) {{
        hits += {v}[i] > 0;
    }}
    return hits;
}}""",
    ),
    "negate": (
        "flip the sign of each item in the {noun}",
        """void negate_{v}({t} *{v}, int {n})
{{
    int i;
    for (i = 0; i < {n}; i++) {{
        {v}[i] = -{v}[i];
    }}
}}""",
    ),
    "sum_squares": (
        "add up the squares of the {noun}",
        """long sum_squares_{v}({t} *{v}, int {n})
{{
    long acc = 0;
    int i;
    for (i = 0; i < {n}; i++) {{
        acc += {v}[i] * {v}[i];
    }}
    log_total(acc);
    return acc;
}}""",
    ),
}


def synthetic_corpus(n=64):
    """Up to 128 records: every operation template crossed with every object.

    Records are ordered object by object, so the default 64 covers every
    operation on the first four objects.
    """
    records = []
    for op, (desc, template) in OPERATIONS.items():
        for noun, v, t, length in OBJECTS:
            code = template.format(v=v, t=t, n=length)
            text = desc.format(noun=noun)
            records.append(CodeRecord(f"{op}_{v}", f"/** {text[0].upper()}{text[1:]}. */\n{code}\n", text))
    if n > len(records):
        raise ValueError(f"at most {len(records)} synthetic records available")
    order = sorted(range(len(records)), key=lambda i: (i % len(OBJECTS), i // len(OBJECTS)))
    return [records[i] for i in order][:n]
