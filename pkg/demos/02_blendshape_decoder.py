"""The linear blendshape decoder and its synthetic face model.

A frame of animation is 53 numbers: 50 expression coefficients plus 3 jaw
rotations.  A subject is 300 identity coefficients.  Decoding to vertex
positions (mm) is a pure linear map, so superposition holds exactly, and all
evaluation metrics are computed in this vertex space.
"""

import numpy as np

from lsfanim import NeutralShape, decode_frame, decode_sequence, synth_model

model, masks = synth_model(seed=7, n_vertices=45)
print(f"vertices: {model.n_vertices}")
print(f"lip region: {len(masks['lip'].vertex_indices)} vertices, "
      f"upper face: {len(masks['upper_face'].vertex_indices)} vertices")

neutral = NeutralShape(np.zeros(300))

# Zero parameters reproduce the template exactly.
rest = decode_frame(model, neutral, np.zeros(53))
print(f"zero frame reproduces template: {np.array_equal(rest, model.template.astype(np.float64))}")

# One unit of an expression coefficient displaces vertices by at most 5 mm.
frame = np.zeros(53)
frame[3] = 1.0
moved = decode_frame(model, neutral, frame)
displacement = np.linalg.norm(moved - rest, axis=1)
print(f"expression channel 3: max vertex displacement {displacement.max():.2f} mm")

# Jaw channels are calibrated in mm per radian and live in the lower face.
frame = np.zeros(53)
frame[50] = 0.3   # ~17 degrees of jaw opening
jaw_moved = decode_frame(model, neutral, frame)
jaw_disp = np.linalg.norm(jaw_moved - rest, axis=1)
lip = masks["lip"].vertex_indices
upper = masks["upper_face"].vertex_indices
print(f"jaw open 0.3 rad: lip region moves {jaw_disp[lip].mean():.2f} mm on average, "
      f"upper face {jaw_disp[upper].mean():.2f} mm")

# Identity coefficients reshape the face; motion decoding is linear in both.
subject = NeutralShape(0.5 * np.random.default_rng(1).standard_normal(300))
a = np.random.default_rng(2).standard_normal(53)
b = np.random.default_rng(3).standard_normal(53)
base = decode_frame(model, subject, np.zeros(53))
superposition_gap = np.abs(
    (decode_frame(model, subject, a + b) - base)
    - ((decode_frame(model, subject, a) - base) + (decode_frame(model, subject, b) - base))
).max()
print(f"superposition gap (exactly linear decoder): {superposition_gap:.2e} mm")

# Sequences decode frame-wise.
motion = np.random.default_rng(4).standard_normal((10, 53)) * 0.2
vertices = decode_sequence(model, subject, motion)
print(f"sequence decode: {motion.shape} parameters -> {vertices.shape} vertex positions")
