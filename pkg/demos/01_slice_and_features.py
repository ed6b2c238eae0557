# %% [markdown]
# # Slicing a map and finding corners in each slice
#
# A gravity-aligned map is cut into horizontal bands one voxel thick. Each
# band becomes a small occupancy bitmap, and each bitmap gets binary corner
# features. This script walks through those steps on one synthetic room.

# %%
import numpy as np

from tomomatch.features import extract_features, match_descriptors
from tomomatch.geometry import voxel_filter
from tomomatch.synthetic import gen_environment, single_room
from tomomatch.tomography import BinaryImage, band_index, extract_slice, rasterize, slice_heights, slice_map

g = 0.05
raw = gen_environment(single_room(seed=3))
cloud = voxel_filter(raw, g)
print(f"raw points {len(raw)}, after the {g} m voxel filter {len(cloud)}")

# %% [markdown]
# ## Bands
#
# Heights start at the lowest point and step by ``g``. Every point lands in
# exactly one band.

# %%
heights = slice_heights(cloud, g)
z_min = float(cloud.points[:, 2].min())
k = band_index(cloud.points[:, 2], z_min, g)
print(f"{len(heights)} bands from {heights[0]:.3f} m to {heights[-1]:.3f} m")
print("points per band (first ten):", np.bincount(k)[:10].tolist())

# %% [markdown]
# ## One slice as an image
#
# At table height the slice shows walls, the door gap and furniture legs.

# %%
h = heights[len(heights) // 3]
sl = extract_slice(cloud, h, g / 2)
img = rasterize(sl, g)
print(f"slice at {h:.2f} m: {len(sl)} points, {img.width}x{img.height} pixels, {img.occupied} occupied")
rows = img.bits[:: max(1, img.height // 24), :: max(1, img.width // 60)]
print("\n".join("".join("#" if b else "." for b in row) for row in rows[::-1]))

# %% [markdown]
# ## Corner features
#
# Keypoints come from a segment test on the radius-3 circle, ranked by a
# corner response. Each keypoint carries an orientation and a 128-bit
# descriptor sampled in its rotated frame.

# %%
feats = extract_features(img, max_k=1000)
print(f"{len(feats)} keypoints, descriptor bytes {feats.descriptors.shape[1]}")
print("first three metric positions:", np.round(feats.metric_xy[:3].astype(float), 3).tolist())

# %% [markdown]
# Rotating the image by a quarter turn moves every keypoint but should keep
# descriptors close in Hamming distance, so matching still works.

# %%
turned = BinaryImage(np.rot90(img.bits), img.origin_x, img.origin_y, g)
matches = match_descriptors(feats, extract_features(turned), max_hamming=40)
print(f"{len(matches)} mutual matches after a 90 degree turn, median distance "
      f"{float(np.median(matches.distance)) if len(matches) else float('nan'):.1f} bits")

# %% [markdown]
# ## The whole map at once
#
# ``slice_map`` does all of the above for every band.

# %%
sset = slice_map(cloud, g)
counts = [len(e.features) for e in sset.entries]
print(f"{len(sset)} slices, {sum(counts)} features total, busiest slice has {max(counts)}")
