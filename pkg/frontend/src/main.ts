import { bootstrap } from "./app.js";

if (document.readyState === "loading") {
  document.addEventListener("DOMContentLoaded", () => bootstrap(document));
} else {
  bootstrap(document);
}
