/**
 * DOM rendering. Machine detections draw as solid amber outlines, the
 * user's own boxes as dashed cyan; all logic lives in the store and
 * geometry modules, this layer only paints snapshots.
 */

import type { Detection, Submission, Task } from "./api.js";
import {
  dragToNormalizedBox,
  normalizedToCanvasRect,
  type NormalizedBox,
  type Point,
  type Viewport,
} from "./geometry.js";
import type { AppStore } from "./store.js";

const MACHINE_STYLE = "#e5a50a";
const USER_STYLE = "#00c7c7";

export function viewportFor(
  canvas: HTMLCanvasElement,
  imageWidth: number,
  imageHeight: number,
  zoom = 1,
): Viewport {
  const fit = Math.min(canvas.width / imageWidth, canvas.height / imageHeight);
  const scale = fit * zoom;
  return {
    scale,
    offsetX: (canvas.width - imageWidth * scale) / 2,
    offsetY: (canvas.height - imageHeight * scale) / 2,
    imageWidth,
    imageHeight,
  };
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  image: HTMLImageElement | null,
  view: Viewport,
  detections: Detection[],
  userBoxes: NormalizedBox[],
  flagged: number[],
) {
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (image) {
    ctx.drawImage(
      image,
      view.offsetX,
      view.offsetY,
      view.imageWidth * view.scale,
      view.imageHeight * view.scale,
    );
  }
  detections.forEach((det, index) => {
    const box: NormalizedBox = {
      x_min: det.box.x_min / view.imageWidth,
      y_min: det.box.y_min / view.imageHeight,
      x_max: det.box.x_max / view.imageWidth,
      y_max: det.box.y_max / view.imageHeight,
    };
    const rect = normalizedToCanvasRect(box, view);
    ctx.setLineDash([]);
    ctx.strokeStyle = MACHINE_STYLE;
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.left, rect.top, rect.width, rect.height);
    if (flagged.includes(index)) {
      ctx.beginPath();
      ctx.moveTo(rect.left, rect.top);
      ctx.lineTo(rect.left + rect.width, rect.top + rect.height);
      ctx.moveTo(rect.left + rect.width, rect.top);
      ctx.lineTo(rect.left, rect.top + rect.height);
      ctx.stroke();
    }
  });
  for (const box of userBoxes) {
    const rect = normalizedToCanvasRect(box, view);
    ctx.setLineDash([6, 4]);
    ctx.strokeStyle = USER_STYLE;
    ctx.lineWidth = 2;
    ctx.strokeRect(rect.left, rect.top, rect.width, rect.height);
  }
  ctx.setLineDash([]);
}

export function attachDragHandler(
  canvas: HTMLCanvasElement,
  getView: () => Viewport,
  onBox: (box: NormalizedBox | null) => void,
) {
  let start: Point | null = null;
  canvas.addEventListener("mousedown", (event) => {
    start = { x: event.offsetX, y: event.offsetY };
  });
  canvas.addEventListener("mouseup", (event) => {
    if (!start) {
      return;
    }
    const end = { x: event.offsetX, y: event.offsetY };
    onBox(dragToNormalizedBox(start, end, getView()));
    start = null;
  });
}

export function taskCard(task: Task): HTMLElement {
  const card = document.createElement("section");
  card.className = "task-card";
  card.dataset.taskId = task.task_id;
  card.innerHTML = `
    <header>
      <strong>${task.task_id}</strong>
      <span class="muted">${task.detections.length} machine detection(s)</span>
    </header>
    <canvas width="480" height="360"></canvas>
    <div class="flags"></div>
    <div class="actions">
      <button class="submit" type="button">Submit corrections</button>
      <span class="status"></span>
    </div>`;
  return card;
}

export function submissionCard(
  sub: Submission,
  mine: boolean,
  pending: boolean,
): HTMLElement {
  const card = document.createElement("article");
  card.className = "submission-card";
  card.dataset.submissionId = sub.submission_id;
  const boxes = sub.payload.missed_boxes.length;
  const flags = sub.payload.false_positive_flags.length;
  const badge = pending
    ? "pending verification"
    : sub.state;
  card.innerHTML = `
    <header>
      <strong>${sub.submission_id}</strong>
      <span class="badge badge-${sub.state}">${badge}</span>
    </header>
    <p class="muted">${boxes} missed box(es), ${flags} false-positive flag(s)
      by ${mine ? "you" : sub.annotator}</p>
    <div class="verdicts">
      ${sub.verdicts.map((v) => `<span>${v.verifier}: ${v.decision}</span>`).join(" ")}
    </div>`;
  if (!mine && sub.state === "submitted") {
    const actions = document.createElement("div");
    actions.className = "actions";
    actions.innerHTML = `
      <button class="approve" type="button">Approve</button>
      <button class="reject" type="button">Reject</button>`;
    card.appendChild(actions);
  }
  return card;
}
