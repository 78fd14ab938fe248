import init, { schedule_demo, bandwidth_sweep } from "./pkg/a2a_sched_web.js";

const COLORS = {
  balance: "#e8a33d",
  intra_exchange: "#8e6bbf",
  scale_out: "#3c78b4",
  redistribute: "#46a06e",
};
const SWEEP_RATIOS = [1, 2, 4, 6, 9, 12, 18, 24, 36, 48];

const $ = (id) => document.getElementById(id);

function params() {
  return {
    n: Number($("n").value),
    m: Number($("m").value),
    workload: $("workload").value,
    skew: Number($("skew").value),
    seed: Number($("seed").value),
    ratio: Number($("ratio").value),
  };
}

function heatmap(canvas, rows, block) {
  const ctx = canvas.getContext("2d");
  const k = rows.length;
  const cell = canvas.width / k;
  const max = Math.max(1, ...rows.flat());
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  rows.forEach((row, i) =>
    row.forEach((v, j) => {
      const a = Math.sqrt(v / max);
      ctx.fillStyle = `rgba(30, 80, 160, ${a})`;
      ctx.fillRect(j * cell, i * cell, Math.ceil(cell), Math.ceil(cell));
    }),
  );
  if (block > 1) {
    ctx.strokeStyle = "#999";
    for (let b = block; b < k; b += block) {
      ctx.beginPath();
      ctx.moveTo(b * cell, 0);
      ctx.lineTo(b * cell, canvas.height);
      ctx.moveTo(0, b * cell);
      ctx.lineTo(canvas.width, b * cell);
      ctx.stroke();
    }
  }
}

function gantt(canvas, rows, horizon) {
  const ctx = canvas.getContext("2d");
  const left = 90;
  const laneH = 22;
  const width = canvas.width - left - 10;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px system-ui";
  rows.forEach(({ label, spans }, r) => {
    const top = 10 + r * 2 * (laneH + 6);
    ctx.fillStyle = "#222";
    ctx.fillText(label, 4, top + laneH);
    for (const s of spans) {
      // scale-up work on the lower lane, scale-out on the upper
      const lane = s.kind === "scale_out" ? 0 : 1;
      const x = left + (s.start / horizon) * width;
      const w = Math.max(1, ((s.end - s.start) / horizon) * width);
      ctx.fillStyle = COLORS[s.kind];
      ctx.fillRect(x, top + lane * (laneH + 2), w, laneH);
      ctx.strokeStyle = "#fff";
      ctx.strokeRect(x, top + lane * (laneH + 2), w, laneH);
    }
  });
  ctx.fillStyle = "#555";
  ctx.fillText(`${(horizon * 1e3).toFixed(3)} ms`, canvas.width - 80, canvas.height - 4);
}

function curve(canvas, points) {
  const ctx = canvas.getContext("2d");
  const pad = 40;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  const ymax = Math.max(...points.flatMap((p) => [p.fast, p.spreadout, p.optimal])) * 1.1;
  const lx = (r) => Math.log(r) / Math.log(points[points.length - 1].ratio);
  const X = (r) => pad + lx(r) * w;
  const Y = (v) => pad + h - (v / ymax) * h;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#aaa";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "12px system-ui";
  for (const p of points) ctx.fillText(String(p.ratio), X(p.ratio) - 6, pad + h + 16);
  ctx.fillText("B1/B2 (log)", pad + w / 2 - 30, canvas.height - 4);
  ctx.fillText(`${ymax.toFixed(2)}`, 4, pad + 4);
  ctx.fillText("0", 24, pad + h);
  const series = [
    ["optimal", "#999"],
    ["spreadout", "#c0504d"],
    ["fast", "#3c78b4"],
  ];
  series.forEach(([key, color], i) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    points.forEach((p, k) => (k ? ctx.lineTo : ctx.moveTo).call(ctx, X(p.ratio), Y(p[key])));
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(key, pad + 10 + i * 90, pad - 8);
  });
  ctx.lineWidth = 1;
}

function runSchedule() {
  $("error").textContent = "";
  let r;
  try {
    r = JSON.parse(schedule_demo(JSON.stringify(params())));
  } catch (e) {
    $("error").textContent = String(e);
    return;
  }
  heatmap($("raw"), r.gpu_matrix, r.m);
  heatmap($("balanced"), r.balanced_matrix, r.m);
  heatmap($("server"), r.server_matrix, 1);
  const horizon = Math.max(r.fast.total_s, r.spreadout.total_s);
  gantt($("gantt"), [
    { label: "FAST", spans: r.fast.spans },
    { label: "SpreadOut", spans: r.spreadout.spans },
  ], horizon);
  const ms = (s) => (s * 1e3).toFixed(3).padStart(9) + " ms";
  $("stats").textContent = [
    `optimal          ${ms(r.optimal_s)}`,
    `FAST             ${ms(r.fast.total_s)}  x${r.fast.ratio.toFixed(3)}  ${r.fast.stages} stages`,
    `SpreadOut (even) ${ms(r.spreadout.total_s)}  x${r.spreadout.ratio.toFixed(3)}`,
    `SpreadOut (raw)  ${ms(r.spreadout_raw_s)}  x${(r.spreadout_raw_s / r.optimal_s).toFixed(3)}`,
    `worst-case ratio bound ${r.ratio_bound.toFixed(3)}`,
    `balanced ${(r.balanced_bytes / 1e6).toFixed(1)} MB, redistributed ${(r.misplaced_bytes / 1e6).toFixed(1)} MB`,
  ].join("\n");
}

function runSweep() {
  $("error").textContent = "";
  try {
    const pts = JSON.parse(bandwidth_sweep(JSON.stringify(params()), new Float64Array(SWEEP_RATIOS)));
    curve($("curve"), pts);
  } catch (e) {
    $("error").textContent = String(e);
  }
}

await init();
$("run").addEventListener("click", runSchedule);
$("sweep").addEventListener("click", runSweep);
runSchedule();
runSweep();
