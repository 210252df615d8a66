#!/usr/bin/env python3
"""Emit src/sobol_directions.inc from the Joe-Kuo (new-joe-kuo-6.21201)
primitive polynomials and initial direction numbers bundled with scipy."""
import pathlib
import sys

import numpy as np
import scipy

MAX_DIMS = int(sys.argv[1]) if len(sys.argv) > 1 else 4096

src = pathlib.Path(scipy.__file__).parent / "stats" / "_sobol_direction_numbers.npz"
table = np.load(src)
poly = table["poly"][:MAX_DIMS]
vinit = table["vinit"][:MAX_DIMS]

out = pathlib.Path(__file__).resolve().parent.parent / "src" / "sobol_directions.inc"
with out.open("w") as f:
    f.write("// Generated by scripts/gen_sobol_table.py. Do not edit.\n")
    f.write("// Joe & Kuo primitive polynomials (leading and trailing bits included)\n")
    f.write("// and initial direction numbers m_1..m_s for each dimension.\n")
    f.write(f"inline constexpr std::size_t kSobolMaxDims = {MAX_DIMS};\n")
    f.write("inline constexpr std::uint32_t kSobolPoly[kSobolMaxDims] = {\n")
    for i in range(0, MAX_DIMS, 12):
        f.write("    " + ", ".join(str(int(p)) for p in poly[i:i + 12]) + ",\n")
    f.write("};\n")
    f.write("inline constexpr std::uint16_t kSobolInit[kSobolMaxDims][18] = {\n")
    for row in vinit:
        f.write("    {" + ",".join(str(int(v)) for v in row) + "},\n")
    f.write("};\n")
print(f"wrote {out} ({MAX_DIMS} dims)")
