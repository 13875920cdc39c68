import init, { Demo } from "./pkg/tcldro_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let demo = null;

function status(msg, err = false) {
  $("status").textContent = msg;
  $("status").className = err ? "err" : "";
}

// Let the status line paint before a blocking solve.
function busy(msg, work) {
  status(msg);
  setTimeout(() => {
    const t0 = performance.now();
    try {
      const done = work();
      status(`${done} (${((performance.now() - t0) / 1000).toFixed(2)} s)`);
    } catch (e) {
      status(String(e.message ?? e), true);
    }
  }, 20);
}

// series: [{label, color, xs, ys}]
function plot(series, xlabel, ylabel, logx = false) {
  const cv = $("plot");
  const g = cv.getContext("2d");
  const W = cv.width, H = cv.height, L = 70, R = 130, T = 15, B = 40;
  g.clearRect(0, 0, W, H);
  const fx = (x) => (logx ? Math.log10(x) : x);
  const xs = series.flatMap((s) => s.xs.map(fx));
  const ys = series.flatMap((s) => s.ys);
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const pad = 0.05 * (y1 - y0);
  y0 -= pad; y1 += pad;
  const px = (x) => L + ((fx(x) - x0) / (x1 - x0)) * (W - L - R);
  const py = (y) => H - B - ((y - y0) / (y1 - y0)) * (H - T - B);

  g.strokeStyle = "#999";
  g.strokeRect(L, T, W - L - R, H - T - B);
  g.fillStyle = "#333";
  g.font = "12px sans-serif";
  for (let i = 0; i <= 4; i++) {
    const y = y0 + (i / 4) * (y1 - y0);
    g.fillText(y.toPrecision(4), 4, py(y) + 4);
    const xv = x0 + (i / 4) * (x1 - x0);
    const label = logx ? (10 ** xv).toPrecision(2) : xv.toPrecision(3);
    g.fillText(label, L + (i / 4) * (W - L - R) - 10, H - B + 16);
  }
  g.fillText(xlabel, (W - R) / 2, H - 6);
  g.save();
  g.translate(12, T + 40);
  g.rotate(-Math.PI / 2);
  g.fillText(ylabel, -40, 0);
  g.restore();

  series.forEach((s, k) => {
    g.strokeStyle = s.color;
    g.lineWidth = 2;
    g.beginPath();
    s.xs.forEach((x, i) => (i ? g.lineTo(px(x), py(s.ys[i])) : g.moveTo(px(x), py(s.ys[i]))));
    g.stroke();
    if (s.xs.length < 30) {
      g.fillStyle = s.color;
      s.xs.forEach((x, i) => g.fillRect(px(x) - 3, py(s.ys[i]) - 3, 6, 6));
    }
    g.fillStyle = s.color;
    g.fillText(s.label, W - R + 10, T + 16 + 18 * k);
  });
}

$("build").onclick = () =>
  busy("simulating ensemble...", () => {
    demo?.free();
    demo = new Demo(num("seed"), num("devices"), num("hours"), num("samples"));
    $("profile").disabled = $("sweep").disabled = false;
    return `ready: ${demo.states()} states`;
  });

$("profile").onclick = () =>
  busy("solving...", () => {
    const r = JSON.parse(demo.profile($("method").value, num("gamma"), num("knob")));
    plot(
      [
        { label: "standard", color: "#888", xs: r.hours, ys: r.standard },
        { label: r.method, color: "#c33", xs: r.hours, ys: r.power },
      ],
      "hour",
      "power (kW)",
    );
    return `objective ${r.objective.toPrecision(6)}`;
  });

$("sweep").onclick = () =>
  busy("sweeping...", () => {
    const values = $("values").value.split(/[\s,]+/).filter(Boolean).map(Number);
    if (values.some((v) => !Number.isFinite(v))) throw new Error("values must be numbers");
    const axis = $("axis").value;
    const rows = JSON.parse(
      demo.sweep($("method").value, axis, new Float64Array(values), num("gamma"), num("knob")),
    );
    const xs = rows.map((r) => r.x);
    const logx = axis === "gamma" && xs.every((x) => x > 0);
    plot(
      [
        { label: "mean |dP|", color: "#36c", xs, ys: rows.map((r) => r.mean_abs_delta) },
        { label: "max |dP|", color: "#c63", xs, ys: rows.map((r) => r.max_abs_delta) },
      ],
      axis,
      "|P - P_standard| (kW)",
      logx,
    );
    return `${rows.length} points`;
  });

init().then(
  () => status("press Build to simulate an ensemble"),
  (e) => status(`failed to load wasm: ${e}`, true),
);
