import init, {
  courseWaypoints,
  runCourse,
  ackermann,
  vehicleGeometry,
  renderRgba,
  detect,
} from "./pkg/nrpl_web.js";

const $ = (id) => document.getElementById(id);

function drawCourse(waypoints, rows) {
  const canvas = $("track");
  const ctx = canvas.getContext("2d");
  const xs = [], ys = [];
  for (let i = 0; i < waypoints.length; i += 2) { xs.push(waypoints[i]); ys.push(waypoints[i + 1]); }
  for (let i = 0; i < rows.length; i += 4) { xs.push(rows[i + 1]); ys.push(rows[i + 2]); }
  const minX = Math.min(...xs), maxX = Math.max(...xs);
  const minY = Math.min(...ys), maxY = Math.max(...ys);
  const pad = 20;
  const scale = (canvas.width - 2 * pad) / Math.max(maxX - minX, maxY - minY, 1e-9);
  const px = (x) => pad + (x - minX) * scale;
  const py = (y) => canvas.height - pad - (y - minY) * scale;

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#c33";
  for (let i = 0; i < waypoints.length; i += 2) {
    ctx.beginPath();
    ctx.arc(px(waypoints[i]), py(waypoints[i + 1]), 2.5, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.strokeStyle = "#236";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  for (let i = 0; i < rows.length; i += 4) {
    const f = i === 0 ? "moveTo" : "lineTo";
    ctx[f](px(rows[i + 1]), py(rows[i + 2]));
  }
  ctx.stroke();
}

function onRun() {
  const shape = $("shape").value;
  const size = Number($("size").value);
  const speed = Number($("speed").value);
  const steps = Number($("steps").value);
  // Circles are sized by radius; halve so both shapes fit the same box.
  const extent = shape === "circle" ? size / 2 : size;
  try {
    const waypoints = courseWaypoints(shape, extent, 1.0);
    const t0 = performance.now();
    const rows = runCourse(shape, extent, 1.0, speed, steps);
    const ms = performance.now() - t0;
    drawCourse(waypoints, rows);
    const n = rows.length;
    $("run-out").textContent = n
      ? `t = ${rows[n - 4].toFixed(2)} s, final (${rows[n - 3].toFixed(2)}, ${rows[n - 2].toFixed(2)}), computed in ${ms.toFixed(0)} ms`
      : "no rows";
  } catch (e) {
    $("run-out").textContent = `error: ${e.message ?? e}`;
  }
}

function onAckermann() {
  const delta = Number($("delta").value);
  const [l, r] = ackermann(delta);
  const [, , maxSteer] = vehicleGeometry();
  const clip = Math.abs(l) > maxSteer || Math.abs(r) > maxSteer ? " (exceeds wheel limit)" : "";
  $("ack-out").textContent = `δ = ${delta.toFixed(3)}  left = ${l.toFixed(4)}  right = ${r.toFixed(4)}${clip}`;
}

function onCamera() {
  const canvas = $("camera");
  const step = Number($("cam-step").value);
  const threshold = Number($("threshold").value);
  try {
    const rgba = renderRgba(step, canvas.width, canvas.height);
    const ctx = canvas.getContext("2d");
    ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), canvas.width, canvas.height), 0, 0);
    const det = detect(step, canvas.width, canvas.height, threshold);
    if (det.length) {
      const [x0, y0, x1, y1, score] = det;
      ctx.strokeStyle = "#e22";
      ctx.lineWidth = 2;
      ctx.strokeRect(x0, y0, x1 - x0 + 1, y1 - y0 + 1);
      $("cam-out").textContent = `box (${x0}, ${y0})-(${x1}, ${y1}) score ${score}`;
    } else {
      $("cam-out").textContent = "no detection";
    }
  } catch (e) {
    $("cam-out").textContent = `error: ${e.message ?? e}`;
  }
}

await init();
$("run").addEventListener("click", onRun);
$("delta").addEventListener("input", onAckermann);
$("cam-step").addEventListener("input", onCamera);
$("threshold").addEventListener("input", onCamera);
onAckermann();
onCamera();
onRun();
