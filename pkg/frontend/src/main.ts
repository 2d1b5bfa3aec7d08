/** Application bootstrap: wires the store to the DOM. */

import { PortalClient } from "./api.js";
import { AppStore, ForbiddenActionError, type Session } from "./store.js";
import {
  attachDragHandler,
  drawScene,
  submissionCard,
  taskCard,
  viewportFor,
} from "./views.js";

interface BootOptions {
  baseUrl: string;
  token: string;
  session: Session;
}

export function boot(root: HTMLElement, options: BootOptions): AppStore {
  const client = new PortalClient(options.baseUrl, options.token);
  const store = new AppStore(client, options.session);

  root.innerHTML = `
    <header class="topbar">
      <h1>fairlens annotation portal</h1>
      <div>
        <span id="whoami">${options.session.userId}
          (${options.session.roles.join(", ")})</span>
        <span id="balance" class="badge">balance: –</span>
      </div>
    </header>
    <main>
      <section id="tasks"><h2>Open tasks</h2><div id="task-list"></div></section>
      <section id="queue"><h2>Verification queue</h2><div id="queue-list"></div></section>
      <section id="mine"><h2>My submissions</h2><div id="mine-list"></div></section>
    </main>
    <footer id="error" class="error"></footer>`;

  const taskList = root.querySelector<HTMLElement>("#task-list")!;
  const queueList = root.querySelector<HTMLElement>("#queue-list")!;
  const mineList = root.querySelector<HTMLElement>("#mine-list")!;
  const balanceEl = root.querySelector<HTMLElement>("#balance")!;
  const errorEl = root.querySelector<HTMLElement>("#error")!;

  const images = new Map<string, HTMLImageElement>();
  const zooms = new Map<string, number>();

  function renderTasks() {
    const state = store.snapshot();
    taskList.replaceChildren();
    for (const task of state.tasks) {
      const card = taskCard(task);
      const canvas = card.querySelector("canvas")!;
      const ctx = canvas.getContext("2d")!;
      const image = images.get(task.image_id) ?? null;
      const zoom = zooms.get(task.task_id) ?? 1;
      const dims = image
        ? { w: image.naturalWidth, h: image.naturalHeight }
        : { w: canvas.width, h: canvas.height };
      const view = viewportFor(canvas, dims.w, dims.h, zoom);
      const draft = store.draftFor(task.task_id);
      drawScene(ctx, image, view, task.detections, draft.boxes, draft.flags);

      attachDragHandler(canvas, () => view, (box) => {
        if (store.canAnnotate) {
          store.addDraftBox(task.task_id, box);
        }
      });
      canvas.addEventListener("wheel", (event) => {
        event.preventDefault();
        const current = zooms.get(task.task_id) ?? 1;
        zooms.set(task.task_id,
          Math.min(8, Math.max(0.25, current * (event.deltaY < 0 ? 1.25 : 0.8))));
        render();
      });

      const flagsEl = card.querySelector<HTMLElement>(".flags")!;
      task.detections.forEach((_, index) => {
        const label = document.createElement("label");
        const checked = draft.flags.includes(index) ? "checked" : "";
        label.innerHTML =
          `<input type="checkbox" data-index="${index}" ${checked}> detection ${index} is not a face`;
        label.querySelector("input")!.addEventListener("change", () => {
          store.toggleFlag(task.task_id, index);
        });
        flagsEl.appendChild(label);
      });

      const submitBtn = card.querySelector<HTMLButtonElement>(".submit")!;
      submitBtn.disabled = !store.canAnnotate;
      submitBtn.addEventListener("click", () => {
        void store.submitDraft(task.task_id).catch(showError);
      });
      taskList.appendChild(card);

      if (image === null) {
        const img = new Image();
        img.onload = () => {
          images.set(task.image_id, img);
          render();
        };
        img.src = client.imageUrl(task.image_id);
        images.set(task.image_id, img);
      }
    }
  }

  function renderQueueAndMine() {
    const state = store.snapshot();
    queueList.replaceChildren();
    for (const sub of store.verificationQueue()) {
      const card = submissionCard(sub, false, state.pending.has(sub.submission_id));
      card.querySelector(".approve")?.addEventListener("click", () => {
        void store.castVerdict(sub.submission_id, "approve").catch(showError);
      });
      card.querySelector(".reject")?.addEventListener("click", () => {
        void store.castVerdict(sub.submission_id, "reject").catch(showError);
      });
      queueList.appendChild(card);
    }
    mineList.replaceChildren();
    for (const sub of store.mySubmissions()) {
      mineList.appendChild(
        submissionCard(sub, true, state.pending.has(sub.submission_id)));
    }
  }

  function render() {
    const state = store.snapshot();
    balanceEl.textContent =
      state.balance === null ? "balance: –" : `balance: ${state.balance}`;
    errorEl.textContent = state.lastError ?? "";
    renderTasks();
    renderQueueAndMine();
  }

  function showError(error: unknown) {
    if (!(error instanceof ForbiddenActionError)) {
      errorEl.textContent = error instanceof Error ? error.message : String(error);
    }
  }

  store.subscribe(render);
  render();
  void store.refreshTasks().catch(showError);
  void store.refreshSubmissions().catch(showError);
  void store.refreshBalance().catch(showError);
  setInterval(() => {
    void store.refreshSubmissions().catch(() => undefined);
    void store.refreshBalance().catch(() => undefined);
  }, 5000);
  return store;
}

// browser entry point: read connection details from the login form
if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = document.getElementById("app")!;
  const params = new URLSearchParams(window.location.search);
  const token = params.get("token") ?? window.localStorage.getItem("fairlens-token");
  const userId = params.get("user") ?? window.localStorage.getItem("fairlens-user");
  const roles = (params.get("roles") ?? window.localStorage.getItem("fairlens-roles") ?? "")
    .split(",").filter(Boolean);
  if (token && userId) {
    window.localStorage.setItem("fairlens-token", token);
    window.localStorage.setItem("fairlens-user", userId);
    window.localStorage.setItem("fairlens-roles", roles.join(","));
    boot(app, { baseUrl: "", token, session: { userId, roles } });
  } else {
    app.innerHTML = `
      <form class="login" onsubmit="return false">
        <h1>fairlens portal</h1>
        <label>access token <input name="token" type="password"></label>
        <label>user id <input name="user"></label>
        <label>roles (comma separated) <input name="roles" placeholder="annotator,verifier"></label>
        <button type="submit">Enter</button>
      </form>`;
    app.querySelector("form")!.addEventListener("submit", () => {
      const form = app.querySelector("form")!;
      const get = (name: string) =>
        (form.querySelector(`[name=${name}]`) as HTMLInputElement).value.trim();
      const query = new URLSearchParams({
        token: get("token"), user: get("user"), roles: get("roles"),
      });
      window.location.search = query.toString();
    });
  }
}
