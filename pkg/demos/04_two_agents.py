# %% [markdown]
# # Two agents over a socket
#
# Agent C serves its map. Agent D slices its own map locally and sends only
# the slice heights and features, which is far smaller than the point cloud.
# C correlates and replies with the transform. The reply is identical to
# what a local match of the same two maps would give.

# %%
import threading

from tomomatch.consensus import MatchConfig, match_maps, prepare_slices
from tomomatch.exchange import ExchangeServer, send, serialize_payload
from tomomatch.harness import BenchmarkConfig, build_pair

bench = BenchmarkConfig(environments=(1,))
map_c, map_d, t_gt, overlap = build_pair(bench, 1, "0.00", 0, 0.05)
cfg = bench.match_config(0.05)
print(f"raw maps: C {len(map_c)} points, D {len(map_d)} points, overlap {overlap:.2f}")

# %% [markdown]
# ## What goes on the wire
#
# Each feature costs 28 bytes: metric x and y, orientation, and a 16-byte
# descriptor. Compare that with 12 bytes per raw point.

# %%
payload = serialize_payload(prepare_slices(map_d, cfg), agent_id=1)
print(f"payload {len(payload)} bytes, raw cloud {12 * len(map_d)} bytes, "
      f"ratio {len(payload) / (12 * len(map_d)):.3f}")

# %% [markdown]
# ## The exchange
#
# The server binds to an ephemeral port on loopback and handles one session
# per connection.

# %%
with ExchangeServer(("127.0.0.1", 0), prepare_slices(map_c, cfg), cfg, agent_id=0) as server:
    threading.Thread(target=server.serve_forever, daemon=True).start()
    remote = send(server.address, map_d, cfg, agent_id=1)
    server.shutdown()

local = match_maps(map_c, map_d, cfg)
t = remote.transform
print(f"remote: x={t.x:.3f} y={t.y:.3f} z={t.z:.3f} theta={t.theta:.4f} consensus {remote.consensus_size}")
print(f"truth:  x={t_gt.x:.3f} y={t_gt.y:.3f} z={t_gt.z:.3f} theta={t_gt.theta:.4f}")
print("JSON identical to a local match:", remote.to_json(False) == local.to_json(False))
